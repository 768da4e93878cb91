"""Command line interface: subcommands, flags and exit codes."""

import numpy as np
import pytest

from biasplan.cli import main
from biasplan.harness import load_csv

_INI = """\
[experiment]
runs = 1
duration = 16.0
prior_duration = 8.0
seed = 123

[planner]
workspace_half = 3.0
"""


@pytest.fixture()
def ini(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(_INI, encoding="utf-8")
    return str(p)


def test_run_subcommand_writes_csv(ini, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", ini, "--out", str(out)]) == 0
    assert (out / "run_0.csv").is_file()
    assert (out / "summary.csv").is_file()
    assert "runs ok: 1/1" in capsys.readouterr().out


def test_plan_subcommand_writes_plan_csv(ini, tmp_path, capsys):
    out = tmp_path / "plan"
    assert main(["plan", "--config", ini, "--out", str(out)]) == 0
    header, rows = load_csv(out / "plan_nodes.csv")
    assert header[:4] == ["id", "parent", "cost", "time"]
    assert len(rows) >= 2
    assert (out / "trajectory_plan.csv").is_file()
    assert "planned" in capsys.readouterr().out


def test_compare_subcommand_writes_both_arms(ini, tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", ini, "--pair", "gp_vs_minsnap",
                 "--out", str(out)])
    assert code == 0
    assert (out / "compare.csv").is_file()
    assert (out / "arm_gp" / "run_0.csv").is_file()
    assert (out / "arm_minsnap" / "run_0.csv").is_file()


def test_report_verifies_emitted_csv(ini, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", ini, "--out", str(out)]) == 0
    assert main(["report", "--out", str(out)]) == 0
    assert "matches" in capsys.readouterr().out


def test_report_flags_tampered_summary(ini, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", ini, "--out", str(out)]) == 0
    summary = out / "summary.csv"
    lines = summary.read_text(encoding="utf-8").splitlines()
    cells = lines[1].split(",")
    cells[3] = "999.0"   # bias_rmse column
    lines[1] = ",".join(cells)
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["report", "--out", str(out)]) == 3
    assert "bias_rmse" in capsys.readouterr().err


def test_seed_flag_controls_reproducibility(ini, tmp_path):
    out_a, out_b, out_c = (tmp_path / n for n in ("a", "b", "c"))
    assert main(["run", "--config", ini, "--seed", "7", "--out", str(out_a)]) == 0
    assert main(["run", "--config", ini, "--seed", "7", "--out", str(out_b)]) == 0
    assert main(["run", "--config", ini, "--seed", "8", "--out", str(out_c)]) == 0
    bytes_a = (out_a / "run_0.csv").read_bytes()
    assert bytes_a == (out_b / "run_0.csv").read_bytes()
    assert bytes_a != (out_c / "run_0.csv").read_bytes()


def test_runs_flag_overrides_config(ini, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", ini, "--runs", "2", "--out", str(out)]) == 0
    assert (out / "run_1.csv").is_file()


def test_missing_config_file_exits_2(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.ini"),
                 "--out", str(tmp_path / "out")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_bad_config_value_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[experiment]\nruns = 0\n", encoding="utf-8")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_runtime_failure_exits_3(tmp_path, capsys):
    # rrt budget below the minimum edge duration: every run fails
    p = tmp_path / "stuck.ini"
    p.write_text(_INI + "budget = 0.2\n", encoding="utf-8")
    code = main(["run", "--config", str(p), "--planner", "rrt",
                 "--out", str(tmp_path / "out")])
    assert code == 3
    assert "all runs failed" in capsys.readouterr().err


def test_unknown_flag_exits_2(ini, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", ini, "--warp", "9"])
    assert exc.value.code == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2

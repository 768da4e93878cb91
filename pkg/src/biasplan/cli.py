"""Command line entry points.

Exit codes: 0 on success, 2 on configuration errors (including bad flags),
3 on runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import ConfigError, load_config


def build_parser():
    p = argparse.ArgumentParser(
        prog="biasplan",
        description="Bias-aware trajectory planning experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None,
                        help="INI config file (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed")
        sp.add_argument("--runs", type=int, default=None,
                        help="override the Monte Carlo run count")
        sp.add_argument("--out", default="out",
                        help="output directory for CSV files")
        sp.add_argument("--planner", choices=("greedy", "rrt"), default=None,
                        help="override the planner")
        sp.add_argument("--interp", choices=("gp", "minsnap"), default=None,
                        help="override the trajectory interpolator")
        sp.add_argument("--full-scale", action="store_true",
                        help="50 runs of 600 s (defaults are desk scale)")

    sp = sub.add_parser("plan", help="grow one plan and write it as CSV")
    common(sp)
    sp = sub.add_parser("run", help="run the Monte Carlo experiment")
    common(sp)
    sp = sub.add_parser("compare", help="run a paired-seed comparison")
    common(sp)
    sp.add_argument("--pair", choices=sorted(harness.PAIRS), required=True,
                    help="which two arms to compare")
    sp = sub.add_parser("report",
                        help="recompute metrics from emitted CSVs and verify")
    sp.add_argument("--out", default="out",
                    help="directory holding run_<k>.csv and summary.csv")
    return p


def _load(args):
    overrides = {"seed": args.seed, "runs": args.runs,
                 "planner": args.planner, "interp": args.interp}
    if args.full_scale:
        overrides.setdefault("duration", 600.0)
        if args.runs is None:
            overrides["runs"] = 50
    return load_config(args.config, overrides)


def _print_summary(summary):
    print(f"runs ok: {summary['runs_ok']}/{summary['runs_total']}")
    for name in ("bias_rmse", "loc_rmse", "final_bias_err",
                 "final_loc_rmse"):
        print(f"{name}: mean {summary['mean_' + name]:.6g} "
              f"std {summary['std_' + name]:.6g}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            problems = harness.verify_out_dir(args.out)
            if problems:
                for line in problems:
                    print(line, file=sys.stderr)
                return 3
            print("summary.csv matches metrics recomputed from run CSVs")
            return 0

        cfg = _load(args)
        if args.command == "plan":
            path, tree = harness.plan_once(cfg)
            harness.emit_plan_csv(path, tree, args.out, cfg)
            print(f"planned {len(path.poses) - 1} edges, "
                  f"cost {path.cost:.6g}, "
                  f"duration {path.total_duration:.2f} s -> {args.out}")
        elif args.command == "run":
            result = harness.run_experiment(cfg)
            harness.emit_csv(result, args.out)
            _print_summary(result.summary)
            if result.summary["runs_ok"] == 0:
                print("all runs failed", file=sys.stderr)
                return 3
        elif args.command == "compare":
            res_a, res_b = harness.run_compare(cfg, args.pair)
            labels = harness.PAIRS[args.pair][1:]
            harness.emit_compare_csv(res_a, res_b, labels, args.out)
            for label, res in zip(labels, (res_a, res_b)):
                print(f"--- arm {label}")
                _print_summary(res.summary)
            if res_a.summary["runs_ok"] == 0 or res_b.summary["runs_ok"] == 0:
                print("an arm had no surviving runs", file=sys.stderr)
                return 3
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # planner/filter/runtime failures
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

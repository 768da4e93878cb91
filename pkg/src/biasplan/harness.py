"""Monte Carlo experiment harness: execute plans, filter, record, emit CSV.

Simulation model: the vehicle tracks each planned trajectory segment exactly
(the dense GP or polynomial samples are the ground-truth kinematics), while
the true IMU biases random-walk and every measurement is synthesized from
truth plus noise.  The error-state filter consumes IMU samples at the IMU
rate and range measurements to visible landmarks at the range rate.

Pairing: all randomness comes from per-run generators seeded with
``[seed, run_index, stream]``, so comparison arms sharing a seed see identical
initial biases, prior-phase noise and planner samples until their decisions
diverge.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eskf import (EstimatorState, RangeMeasurement, initial_covariance,
                   predict, trace_bias, trace_position, update_range)
from .imu import ImuSample
from .minsnap import interpolate_min_snap
from .planner import greedy_plan, plan_tree_rows, rrt_star_plan
from .rotations import rotmat_to_quat
from .scenarios import make_scenario
from .trajectory import (SegmentSpec, _time_grid, default_kernel,
                         interpolate_segment, segment_duration_heuristic)

RUN_HEADER = ["t", "ex", "ey", "ez", "bias_err", "loc_err", "trace_bias",
              "trace_pos"]
TRAJ_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az",
               "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
SUMMARY_HEADER = ["run", "status", "lam", "bias_rmse", "loc_rmse",
                  "final_bias_err", "final_loc_rmse", "cross_time",
                  "mean_abs_acc", "reason"]
PLAN_HEADER = ["id", "parent", "cost", "time", "x", "y", "z",
               "qw", "qx", "qy", "qz"]

# Fraction of the record used for the "final" (post-convergence) metrics.
FINAL_WINDOW = 0.1


@dataclass
class RunRecord:
    """Per-run error and trace series at the record rate."""

    run_index: int
    t: np.ndarray
    err: np.ndarray          # (N, 3) estimated minus true position
    bias_err: np.ndarray     # (N,) accel-bias error norm
    loc_err: np.ndarray      # (N,) position error norm
    trace_bias: np.ndarray
    trace_pos: np.ndarray
    status: str = "ok"
    reason: str = ""


@dataclass
class TrajectoryLog:
    """Executed ground-truth trajectory at the record rate."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    quat: np.ndarray         # (N, 4) scalar-first
    angvel: np.ndarray


@dataclass
class RunMetrics:
    run_index: int
    status: str
    lam: float
    bias_rmse: float
    loc_rmse: float
    final_bias_err: float
    final_loc_rmse: float
    cross_time: float        # first time trace_bias < lam, inf if never
    mean_abs_acc: float      # mean acceleration norm of the executed trajectory
    reason: str = ""


@dataclass
class ExperimentResult:
    config: object
    records: list
    metrics: list
    summary: dict
    trajectories: list
    paths: list
    trees: list = field(default_factory=list)


@dataclass
class _SimState:
    est: EstimatorState
    P: np.ndarray
    b_f: np.ndarray          # true accelerometer bias
    b_w: np.ndarray          # true gyroscope bias
    t: float = 0.0
    step: int = 0
    epoch: int = 0           # range epochs consumed (round-robin cursor)


class RunRecorder:
    """Accumulates record-rate rows during execution."""

    def __init__(self):
        self.rows = []
        self.traj = []

    def add(self, sim, pos, vel, acc, rot, angvel):
        err = sim.est.r - pos
        self.rows.append((sim.t, err[0], err[1], err[2],
                          float(np.linalg.norm(sim.est.b_f - sim.b_f)),
                          float(np.linalg.norm(err)),
                          trace_bias(sim.P), trace_position(sim.P)))
        q = rotmat_to_quat(rot)
        self.traj.append((sim.t, *pos, *vel, *acc, *q, *angvel))

    def to_record(self, run_index):
        a = np.array(self.rows) if self.rows else np.zeros((0, 8))
        return RunRecord(run_index=run_index, t=a[:, 0], err=a[:, 1:4],
                         bias_err=a[:, 4], loc_err=a[:, 5],
                         trace_bias=a[:, 6], trace_pos=a[:, 7])

    def to_trajectory(self):
        a = np.array(self.traj) if self.traj else np.zeros((0, 17))
        return TrajectoryLog(t=a[:, 0], pos=a[:, 1:4], vel=a[:, 4:7],
                             acc=a[:, 7:10], quat=a[:, 10:14],
                             angvel=a[:, 14:17])


def execute_segments(sim, segments, landmarks, sensors, rng,
                     recorder=None, record_every=10):
    """Run truth, measurement synthesis and the filter along segments.

    Truth kinematics are the segment samples themselves (perfect tracking);
    the true biases random-walk per IMU step.  Measurement synthesis matches
    :func:`biasplan.imu.synthesize_imu` with the segment channels as inputs.
    """
    noise = sensors.noise
    g = noise.gravity
    range_every = max(1, int(round(sensors.imu_rate / sensors.range_rate)))
    lm_list = list(landmarks.values()) if isinstance(landmarks, dict) else list(landmarks)
    lm_map = {lm.id: lm for lm in lm_list}

    for seg in segments:
        dt = float(seg.times[1] - seg.times[0])
        sq = np.sqrt(dt)
        for k in range(1, len(seg)):
            Rk = seg.rot[k - 1]
            f_tilde = Rk.T @ (seg.acc[k - 1] - g) + sim.b_f \
                + noise.sigma_f * rng.standard_normal(3)
            w_tilde = seg.angvel[k - 1] + sim.b_w \
                + noise.sigma_w * rng.standard_normal(3)
            sample = ImuSample(t=sim.t, f_tilde=f_tilde, omega_tilde=w_tilde)
            sim.est, sim.P = predict(sim.est, sim.P, sample, dt, noise)
            sim.b_f = sim.b_f + noise.sigma_bf * sq * rng.standard_normal(3)
            sim.b_w = sim.b_w + noise.sigma_bw * sq * rng.standard_normal(3)
            sim.t += dt
            sim.step += 1
            if sim.step % range_every == 0:
                pos = seg.pos[k]
                if sensors.round_robin and lm_list:
                    chosen = [lm_list[sim.epoch % len(lm_list)]]
                    sim.epoch += 1
                else:
                    chosen = lm_list
                for lm in chosen:
                    rho = float(np.linalg.norm(pos - lm.position))
                    if sensors.max_range is not None and rho > sensors.max_range:
                        continue
                    z = rho + sensors.range_noise_std * rng.standard_normal()
                    meas = RangeMeasurement(t=sim.t, landmark_id=lm.id,
                                            range=max(z, 0.0),
                                            noise_std=sensors.range_noise_std)
                    sim.est, sim.P = update_range(sim.est, sim.P, meas, lm_map,
                                                  joseph=True)
            if recorder is not None and sim.step % record_every == 0:
                recorder.add(sim, seg.pos[k], seg.vel[k], seg.acc[k],
                             seg.rot[k], seg.angvel[k])
    return sim


def chain_pose_segments(poses, sample_rate, v_max, a_max, interp="gp",
                        signal_variance=1.0, lengthscale_factor=3.0,
                        jitter=1e-10, durations=None):
    """Rest-to-rest segments visiting poses in order.

    Durations default to the plausibility heuristic per leg.
    """
    segs = []
    for i in range(len(poses) - 1):
        a, b = poses[i], poses[i + 1]
        spec = SegmentSpec(start_pos=a.position, end_pos=b.position,
                           start_rot=a.rotation, end_rot=b.rotation,
                           duration=1.0, sample_rate=sample_rate)
        dur = durations[i] if durations is not None \
            else segment_duration_heuristic(spec, v_max, a_max)
        spec = dataclasses.replace(spec, duration=dur)
        segs.append(_materialize(spec, interp, signal_variance,
                                 lengthscale_factor, jitter))
    return segs


def _materialize(spec, interp, signal_variance, lengthscale_factor, jitter):
    if interp == "minsnap":
        return interpolate_min_snap(spec)
    _, T = _time_grid(spec.duration, spec.sample_rate)
    params = default_kernel(T, signal_variance, jitter, lengthscale_factor)
    return interpolate_segment(spec, params)


def _hold(pose, duration, sample_rate):
    spec = SegmentSpec(start_pos=pose.position, end_pos=pose.position,
                       start_rot=pose.rotation, end_rot=pose.rotation,
                       duration=duration, sample_rate=sample_rate)
    return interpolate_segment(spec)


def path_segments(path, config, interp=None, pad=True):
    """Materialize a planned path at the IMU rate, hold-padded to the duration."""
    interp = interp or config.interp
    segs = []
    total = 0.0
    for i in range(len(path.poses) - 1):
        spec = SegmentSpec(start_pos=path.poses[i].position,
                           end_pos=path.poses[i + 1].position,
                           start_rot=path.poses[i].rotation,
                           end_rot=path.poses[i + 1].rotation,
                           duration=path.durations[i],
                           sample_rate=config.imu_rate)
        segs.append(_materialize(spec, interp, config.signal_variance,
                                 config.lengthscale_factor, config.jitter))
        total += segs[-1].duration
    if pad and total > config.duration + 1e-9:
        raise RuntimeError("planned duration exceeds the experiment duration")
    if pad and config.duration - total > 1e-9:
        segs.append(_hold(path.poses[-1], config.duration - total,
                          config.imu_rate))
    return segs


def _run_rngs(seed, run_index):
    return [np.random.default_rng([seed, run_index, k]) for k in range(4)]


def _prepare_run(config, scenario, run_index, preplanned=None):
    """Prior sweep then plan: the sim state and path an execution starts from."""
    sensors = config.sensor_config()
    rng_bias, rng_prior, rng_plan, rng_exec = _run_rngs(config.seed, run_index)

    sim = _SimState(
        est=EstimatorState(r=scenario.start.position.copy(),
                           v=np.zeros(3),
                           R=scenario.start.rotation.copy()),
        P=initial_covariance(config.sigma_pos0, config.sigma_vel0,
                             config.sigma_theta0, config.sigma_bf0,
                             config.sigma_bw0),
        b_f=config.sigma_bf0 * rng_bias.standard_normal(3),
        b_w=config.sigma_bw0 * rng_bias.standard_normal(3))

    # prior phase: fixed waypoints (possibly none), hold-padded to duration
    prior_poses = [scenario.start] + list(scenario.prior_poses)
    prior_segs = chain_pose_segments(
        prior_poses, config.imu_rate, config.v_max, config.a_max, "gp",
        config.signal_variance, config.lengthscale_factor, config.jitter)
    prior_total = sum(s.duration for s in prior_segs)
    if config.prior_duration - prior_total > 1e-9:
        prior_segs.append(_hold(prior_poses[-1],
                                config.prior_duration - prior_total,
                                config.imu_rate))
    execute_segments(sim, prior_segs, scenario.landmarks, sensors, rng_prior)

    # plan from the current estimate; truth re-anchors to the plan start
    # (the handoff offset is the current position error, which truth tracking
    # absorbs by construction)
    if preplanned is None:
        pcfg = config.planner_config(scenario.bounds)
        if config.planner == "rrt":
            path, tree = rrt_star_plan(pcfg, sim.est, sim.P,
                                       scenario.landmarks, sensors,
                                       rng=rng_plan)
        else:
            path = greedy_plan(pcfg, sim.est, sim.P, scenario.landmarks,
                               sensors, rng=rng_plan)
            tree = None
    else:
        path, tree = preplanned, None
    return sim, path, tree, rng_exec


def plan_once(config):
    """Prior sweep then a single plan (run index 0), without execution."""
    scenario = make_scenario(config.scenario, config.map_half,
                             config.workspace_half)
    _, path, tree, _ = _prepare_run(config, scenario, 0)
    return path, tree


def _single_run(config, scenario, run_index, preplanned=None, interp=None):
    """One paired-seed run: prior sweep, plan (or reuse), execute, record."""
    sim, path, tree, rng_exec = _prepare_run(config, scenario, run_index,
                                             preplanned)
    sensors = config.sensor_config()
    segs = path_segments(path, config, interp)
    recorder = RunRecorder()
    record_every = max(1, int(round(config.imu_rate / config.record_rate)))
    sim.t = 0.0
    sim.step = 0
    execute_segments(sim, segs, scenario.landmarks, sensors, rng_exec,
                     recorder=recorder, record_every=record_every)
    return (recorder.to_record(run_index), recorder.to_trajectory(),
            path, tree)


def run_experiment(config, preplanned_paths=None):
    """All Monte Carlo runs of one experiment arm.

    A run that raises is recorded as failed with the reason and excluded
    from the aggregates (attrition, not a crash).
    """
    scenario = make_scenario(config.scenario, config.map_half,
                             config.workspace_half)
    records, trajectories, paths, trees = [], [], [], []
    for i in range(config.runs):
        pre = None if preplanned_paths is None else preplanned_paths[i]
        try:
            rec, traj, path, tree = _single_run(config, scenario, i,
                                                preplanned=pre)
        except Exception as e:  # attrition: keep the arm going
            rec = RunRecord(run_index=i, t=np.zeros(0),
                            err=np.zeros((0, 3)), bias_err=np.zeros(0),
                            loc_err=np.zeros(0), trace_bias=np.zeros(0),
                            trace_pos=np.zeros(0), status="failed",
                            reason=f"{type(e).__name__}: {e}")
            traj, path, tree = None, None, None
        records.append(rec)
        trajectories.append(traj)
        paths.append(path)
        trees.append(tree)
    metrics = [compute_metrics(rec, config.lam, traj)
               for rec, traj in zip(records, trajectories)]
    return ExperimentResult(config=config, records=records, metrics=metrics,
                            summary=summarize(metrics),
                            trajectories=trajectories, paths=paths,
                            trees=trees)


def compute_metrics(record, lam=0.01, trajectory=None):
    """RMSE and convergence metrics of one run.

    ``final_*`` metrics average the last tenth of the record (the
    post-convergence window).  ``cross_time`` is the first recorded time the
    bias-covariance trace falls below ``lam``, infinity if it never does.
    """
    if record.status != "ok" or len(record.t) == 0:
        return RunMetrics(record.run_index, record.status or "failed", lam,
                          np.nan, np.nan, np.nan, np.nan, np.nan, np.nan,
                          record.reason)
    n_final = max(1, int(round(FINAL_WINDOW * len(record.t))))
    below = np.nonzero(record.trace_bias < lam)[0]
    cross = float(record.t[below[0]]) if len(below) else float("inf")
    mean_abs_acc = np.nan
    if trajectory is not None:
        mean_abs_acc = float(np.mean(np.linalg.norm(trajectory.acc, axis=1)))
    return RunMetrics(
        run_index=record.run_index, status="ok", lam=lam,
        bias_rmse=float(np.sqrt(np.mean(record.bias_err ** 2))),
        loc_rmse=float(np.sqrt(np.mean(record.loc_err ** 2))),
        final_bias_err=float(np.mean(record.bias_err[-n_final:])),
        final_loc_rmse=float(np.sqrt(np.mean(record.loc_err[-n_final:] ** 2))),
        cross_time=cross, mean_abs_acc=mean_abs_acc)


def summarize(metrics):
    """Mean/std aggregates over the runs that finished."""
    ok = [m for m in metrics if m.status == "ok"]
    summary = {"runs_total": len(metrics), "runs_ok": len(ok)}
    for name in ("bias_rmse", "loc_rmse", "final_bias_err", "final_loc_rmse"):
        vals = np.array([getattr(m, name) for m in ok])
        summary[f"mean_{name}"] = float(vals.mean()) if len(vals) else np.nan
        summary[f"std_{name}"] = float(vals.std()) if len(vals) else np.nan
    return summary


# --------------------------------------------------------------------- CSV


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def emit_csv(result, out_dir):
    """Write run_<k>.csv, trajectory_<k>.csv and summary.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in result.records:
        rows = [(rec.t[i], rec.err[i, 0], rec.err[i, 1], rec.err[i, 2],
                 rec.bias_err[i], rec.loc_err[i], rec.trace_bias[i],
                 rec.trace_pos[i]) for i in range(len(rec.t))]
        _write_csv(out / f"run_{rec.run_index}.csv", RUN_HEADER, rows)
    for i, traj in enumerate(result.trajectories):
        if traj is None:
            continue
        rows = [(traj.t[k], *traj.pos[k], *traj.vel[k], *traj.acc[k],
                 *traj.quat[k], *traj.angvel[k]) for k in range(len(traj.t))]
        _write_csv(out / f"trajectory_{i}.csv", TRAJ_HEADER, rows)
    rows = [(m.run_index, m.status, m.lam, m.bias_rmse, m.loc_rmse,
             m.final_bias_err, m.final_loc_rmse, m.cross_time,
             m.mean_abs_acc, m.reason) for m in result.metrics]
    if rows:
        s = result.summary
        for stat in ("mean", "std"):
            rows.append((stat, "aggregate",
                         result.config.lam if result.config else 0.0,
                         s[f"{stat}_bias_rmse"], s[f"{stat}_loc_rmse"],
                         s[f"{stat}_final_bias_err"],
                         s[f"{stat}_final_loc_rmse"], "", "", ""))
    _write_csv(out / "summary.csv", SUMMARY_HEADER, rows)


def emit_plan_csv(path, tree, out_dir, config):
    """Write plan_nodes.csv and the best-branch trajectory at the record rate."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if tree is not None:
        rows = plan_tree_rows(tree)
    else:
        rows = []
        t = 0.0
        for i, pose in enumerate(path.poses):
            q = rotmat_to_quat(pose.rotation)
            cost = 0.0 if i == 0 else rows[-1][2] + path.edge_costs[i - 1]
            if i > 0:
                t += path.durations[i - 1]
            rows.append((i, i - 1, cost, t, *pose.position, *q))
    _write_csv(out / "plan_nodes.csv", PLAN_HEADER, rows)

    cfg_rec = dataclasses.replace(config, imu_rate=config.record_rate)
    segs = path_segments(path, cfg_rec, pad=False)
    rows = []
    t0 = 0.0
    for seg in segs:
        for k in range(len(seg)):
            if rows and k == 0:
                continue  # shared junction sample
            q = rotmat_to_quat(seg.rot[k])
            rows.append((t0 + seg.times[k], *seg.pos[k], *seg.vel[k],
                         *seg.acc[k], *q, *seg.angvel[k]))
        t0 += seg.duration
    _write_csv(out / "trajectory_plan.csv", TRAJ_HEADER, rows)


def load_csv(path):
    """Read one of our CSVs back: (header, rows) with floats parsed."""
    with open(path, encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = []
        for cell in line.split(","):
            try:
                cells.append(float(cell))
            except ValueError:
                cells.append(cell)
        rows.append(cells)
    return header, rows


def verify_out_dir(out_dir):
    """Recompute per-run metrics from run_<k>.csv and check summary.csv.

    Returns a list of human-readable mismatch strings (empty when clean).
    """
    out = Path(out_dir)
    header, rows = load_csv(out / "summary.csv")
    problems = []
    cols = {name: i for i, name in enumerate(header)}
    for row in rows:
        if not isinstance(row[cols["run"]], float):
            continue  # aggregate rows
        k = int(row[cols["run"]])
        if row[cols["status"]] != "ok":
            continue
        run_header, run_rows = load_csv(out / f"run_{k}.csv")
        a = np.array(run_rows, dtype=float)
        ri = {n: i for i, n in enumerate(run_header)}
        lam = row[cols["lam"]]
        n_final = max(1, int(round(FINAL_WINDOW * len(a))))
        below = np.nonzero(a[:, ri["trace_bias"]] < lam)[0]
        recomputed = {
            "bias_rmse": float(np.sqrt(np.mean(a[:, ri["bias_err"]] ** 2))),
            "loc_rmse": float(np.sqrt(np.mean(a[:, ri["loc_err"]] ** 2))),
            "final_bias_err": float(np.mean(a[-n_final:, ri["bias_err"]])),
            "final_loc_rmse": float(np.sqrt(np.mean(
                a[-n_final:, ri["loc_err"]] ** 2))),
            "cross_time": float(a[below[0], ri["t"]]) if len(below)
            else float("inf"),
        }
        for name, want in recomputed.items():
            got = row[cols[name]]
            same = got == want or (isinstance(got, float)
                                   and np.isnan(got) and np.isnan(want))
            if not same:
                problems.append(f"run {k}: {name} summary={got!r} "
                                f"recomputed={want!r}")
    return problems


# ------------------------------------------------------------------ compare


PAIRS = {
    "adaptive_vs_position": ("policy", "adaptive", "position_only"),
    "rrt_vs_greedy": ("planner", "rrt", "greedy"),
    "gp_vs_minsnap": ("interp", "gp", "minsnap"),
}


def run_compare(config, pair):
    """Run both arms of a named comparison with paired seeds.

    ``gp_vs_minsnap`` plans once (GP edges) and re-executes the same waypoint
    sequences with the polynomial interpolator, isolating the interpolation
    effect; the other pairs re-plan per arm.
    """
    if pair not in PAIRS:
        raise ValueError(f"unknown pair {pair!r}; choose from {sorted(PAIRS)}")
    field_name, val_a, val_b = PAIRS[pair]
    cfg_a = dataclasses.replace(config, **{field_name: val_a})
    res_a = run_experiment(cfg_a)
    if pair == "gp_vs_minsnap":
        cfg_b = dataclasses.replace(config, **{field_name: val_b})
        res_b = run_experiment(cfg_b, preplanned_paths=res_a.paths)
    else:
        cfg_b = dataclasses.replace(config, **{field_name: val_b})
        res_b = run_experiment(cfg_b)
    return res_a, res_b


COMPARE_HEADER = ["run", "metric", "arm_a", "arm_b"]


def emit_compare_csv(res_a, res_b, labels, out_dir):
    out = Path(out_dir)
    emit_csv(res_a, out / f"arm_{labels[0]}")
    emit_csv(res_b, out / f"arm_{labels[1]}")
    rows = []
    for ma, mb in zip(res_a.metrics, res_b.metrics):
        for name in ("bias_rmse", "loc_rmse", "final_bias_err",
                     "final_loc_rmse", "cross_time", "mean_abs_acc"):
            rows.append((ma.run_index, name, getattr(ma, name),
                         getattr(mb, name)))
    for name in ("mean_bias_rmse", "mean_loc_rmse", "mean_final_bias_err",
                 "mean_final_loc_rmse"):
        rows.append(("mean", name[5:], res_a.summary[name], res_b.summary[name]))
    _write_csv(out / "compare.csv", COMPARE_HEADER, rows)

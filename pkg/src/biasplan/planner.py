"""Trace-driven informative path planning over 6-DOF poses.

Edges are GP trajectory segments between rest-to-rest poses (all boundary
derivatives zero), scored by the forecast change of a covariance-block trace:
the joint IMU-bias block while its trace is at or above the switching
threshold, the position block afterwards.  Two planners share this edge
model: an RRT* variant that picks minimum-cost-to-come parents inside a
neighborhood and rewires with depth-limited covariance re-forecasting, and a
greedy baseline that repeatedly commits to the best of a handful of sampled
candidates.

Costs are trace differences and are usually negative (updates shrink the
covariance), so minimizing cost-to-come under the duration budget rewards
branches that remove the most uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .eskf import forecast_covariance, trace_bias, trace_position
from .gp import GramConditioningError
from .rotations import random_rotation
from .trajectory import (SegmentSpec, _time_grid, default_kernel,
                         interpolate_segment, segment_duration_heuristic)


class PlannerError(RuntimeError):
    """Planning could not proceed (e.g. no feasible edge from the root)."""


class UtilityMode(Enum):
    BIAS_TRACE = "bias_trace"
    POSITION_TRACE = "position_trace"


def utility(cov_before, cov_after, mode):
    """Trace difference of the mode's covariance block (after minus before)."""
    if mode is UtilityMode.BIAS_TRACE:
        return trace_bias(cov_after) - trace_bias(cov_before)
    if mode is UtilityMode.POSITION_TRACE:
        return trace_position(cov_after) - trace_position(cov_before)
    raise ValueError(f"unknown mode {mode!r}")


def select_mode(cov, lam):
    """BIAS_TRACE while the bias-block trace is at or above ``lam`` (boundary included)."""
    return (UtilityMode.BIAS_TRACE if trace_bias(cov) >= lam
            else UtilityMode.POSITION_TRACE)


def resolve_mode(cov, lam, policy):
    if policy == "adaptive":
        return select_mode(cov, lam)
    if policy == "position_only":
        return UtilityMode.POSITION_TRACE
    if policy == "bias_only":
        return UtilityMode.BIAS_TRACE
    raise ValueError(f"unknown utility policy {policy!r}")


def _vec3(v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,)")
    return v


@dataclass(frozen=True)
class Box:
    """Axis-aligned sampling bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec3(self.lo, "lo"))
        object.__setattr__(self, "hi", _vec3(self.hi, "hi"))
        if not np.all(self.hi >= self.lo):
            raise ValueError("box extents must satisfy hi >= lo on every axis")


@dataclass(frozen=True)
class Pose6D:
    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "rotation",
                           np.asarray(self.rotation, dtype=float))


@dataclass
class PlannerConfig:
    bounds: Box
    budget: float
    max_nodes: int = 3000
    near_radius: float = 2.0
    lam: float = 0.01
    v_max: float = 1.0
    a_max: float = 2.0
    candidate_count: int = 5
    min_duration: float = 0.0       # floor on edge durations (maneuver cadence)
    sample_rate: float = 20.0       # forecast grid
    policy: str = "adaptive"
    rewire_depth: int = 2
    max_root_failures: int = 100
    seed: int = 0
    signal_variance: float = 1.0
    lengthscale_factor: float = 3.0
    jitter: float = 1e-10
    attitude: str = "random"

    def __post_init__(self):
        if self.budget <= 0.0:
            raise ValueError("budget must be positive")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be at least 1")
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be at least 1")
        for name in ("near_radius", "lam", "v_max", "a_max", "sample_rate"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.attitude not in ("random", "hold", "track"):
            raise ValueError(f"unknown attitude mode {self.attitude!r}")


@dataclass
class PlanNode:
    id: int
    pose: Pose6D
    parent: int | None
    edge_cost: float
    cost_to_come: float
    arrival_state: object          # EstimatorState at the node
    arrival_cov: np.ndarray
    arrival_time: float
    duration: float                # incoming edge duration, 0 at the root
    mode: UtilityMode | None = None  # utility mode of the incoming edge


@dataclass
class ConnectResult:
    spec: SegmentSpec
    segment: object                # TrajectorySegment at the forecast rate
    arrival_state: object
    arrival_cov: np.ndarray
    cost: float
    mode: UtilityMode
    duration: float


@dataclass
class PlanTree:
    nodes: list
    children: dict

    def branch(self, node_id):
        """Node ids from the root to ``node_id``."""
        chain = []
        nid = node_id
        while nid is not None:
            chain.append(nid)
            nid = self.nodes[nid].parent
        return chain[::-1]

    def validate(self, tol=1e-9):
        """Check stored cost/time bookkeeping against the stored edges."""
        for n in self.nodes:
            if n.parent is None:
                assert n.cost_to_come == 0.0 and n.arrival_time == 0.0
                continue
            p = self.nodes[n.parent]
            assert abs(n.cost_to_come - (p.cost_to_come + n.edge_cost)) <= tol
            assert abs(n.arrival_time - (p.arrival_time + n.duration)) <= tol


@dataclass
class PlannedPath:
    """Best branch of a plan: poses with per-edge durations and bookkeeping."""

    poses: list
    durations: list
    edge_costs: list
    modes: list
    planned_covs: list             # arrival covariance per pose (incl. start)
    cost: float
    node_ids: list = field(default_factory=list)

    @property
    def total_duration(self):
        return float(sum(self.durations))


def sample_pose(bounds, rng, attitude="random"):
    """Uniform position in the box with an orientation set by ``attitude``.

    ``random`` draws a uniform rotation (subgroup algorithm).  ``hold`` and
    ``track`` both return the identity: a platform that keeps a level
    attitude.  Under ``track`` the sampled orientation is provisional; the
    planner re-points the waypoint along the incoming displacement once the
    parent is known, so the heading a candidate ends up with depends on
    which node it is wired to.
    """
    p = bounds.lo + rng.random(3) * (bounds.hi - bounds.lo)
    if attitude != "random":
        return Pose6D(position=p, rotation=np.eye(3))
    return Pose6D(position=p, rotation=random_rotation(rng))


def _yaw_of(R):
    return float(np.arctan2(R[1, 0], R[0, 0]))


def _facing_pose(from_pose, position):
    """Level pose at ``position`` yawed to face travel from ``from_pose``.

    Heading changes are the one rotation a level platform still performs,
    and they are what keeps the accelerometer-bias/tilt split observable:
    yawing rotates the body-anchored bias leak while the gravity ghost stays
    world-fixed.  Near-vertical hops keep the previous heading.
    """
    d = position - from_pose.position
    if np.hypot(d[0], d[1]) < 1e-9:
        yaw = _yaw_of(from_pose.rotation)
    else:
        yaw = float(np.arctan2(d[1], d[0]))
    c, s = np.cos(yaw), np.sin(yaw)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Pose6D(position=position, rotation=Rz)


def _edge_spec(from_pose, to_pose, config):
    probe = SegmentSpec(start_pos=from_pose.position, end_pos=to_pose.position,
                        start_rot=from_pose.rotation, end_rot=to_pose.rotation,
                        duration=1.0, sample_rate=config.sample_rate)
    dur = max(segment_duration_heuristic(probe, config.v_max, config.a_max),
              config.min_duration)
    return SegmentSpec(start_pos=from_pose.position, end_pos=to_pose.position,
                       start_rot=from_pose.rotation, end_rot=to_pose.rotation,
                       duration=dur, sample_rate=config.sample_rate)


def connect(node, to_pose, landmarks, sensors, config):
    """Build and score the edge from a tree node to a pose.

    The segment is rest-to-rest (zero boundary velocity, acceleration and
    angular rate) with the duration heuristic's timing, interpolated on the
    forecast grid, and scored by the forecast trace change under the node's
    current utility mode.  Returns None when the edge is infeasible (chart
    rejection or conditioning failure).
    """
    spec = _edge_spec(node.pose, to_pose, config)
    _, T = _time_grid(spec.duration, spec.sample_rate)
    params = default_kernel(T, config.signal_variance, config.jitter,
                            config.lengthscale_factor)
    try:
        segment = interpolate_segment(spec, params)
    except (ValueError, GramConditioningError):
        return None
    arrival, cov = forecast_covariance(node.arrival_state, node.arrival_cov,
                                       segment, landmarks, sensors)
    mode = resolve_mode(node.arrival_cov, config.lam, config.policy)
    cost = utility(node.arrival_cov, cov, mode)
    return ConnectResult(spec=spec, segment=segment, arrival_state=arrival,
                         arrival_cov=cov, cost=cost, mode=mode,
                         duration=segment.duration)


def _root_node(init_state, init_cov):
    pose = Pose6D(position=init_state.r.copy(), rotation=init_state.R.copy())
    return PlanNode(id=0, pose=pose, parent=None, edge_cost=0.0,
                    cost_to_come=0.0, arrival_state=init_state.copy(),
                    arrival_cov=np.array(init_cov, dtype=float, copy=True),
                    arrival_time=0.0, duration=0.0)


def _extract_path(tree, node_id):
    ids = tree.branch(node_id)
    nodes = [tree.nodes[i] for i in ids]
    return PlannedPath(
        poses=[n.pose for n in nodes],
        durations=[n.duration for n in nodes[1:]],
        edge_costs=[n.edge_cost for n in nodes[1:]],
        modes=[n.mode for n in nodes[1:]],
        planned_covs=[n.arrival_cov for n in nodes],
        cost=nodes[-1].cost_to_come,
        node_ids=ids)


def rrt_star_plan(config, init_state, init_cov, landmarks, sensors, rng=None):
    """Grow an RRT* over poses and return (best branch, tree).

    Parents are chosen to minimize cost-to-come among neighbors within
    ``near_radius`` (position metric; nearest node as fallback), then the
    neighborhood is rewired through the new node wherever that lowers
    cost-to-come.  Rewiring re-forecasts covariances ``rewire_depth`` levels
    below the rewired node; deeper descendants keep their stored edge costs
    (a bounded-cost approximation) while cost-to-come stays additive in the
    stored edges.  The best branch is the minimum terminal cost-to-come among
    nodes whose cumulative duration fits the budget; there is no goal node.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    root = _root_node(init_state, init_cov)
    nodes = [root]
    children = {0: []}
    tree = PlanTree(nodes=nodes, children=children)
    failures = 0

    while len(nodes) < config.max_nodes:
        if len(nodes) == 1 and failures >= config.max_root_failures:
            raise PlannerError(
                f"no feasible edge from the root after {failures} attempts")
        pose = sample_pose(config.bounds, rng, config.attitude)
        dists = [float(np.linalg.norm(n.pose.position - pose.position))
                 for n in nodes]
        near = [n for n, d in zip(nodes, dists) if d <= config.near_radius]
        if not near:
            near = [nodes[int(np.argmin(dists))]]

        best = None
        for n in near:
            target = (_facing_pose(n.pose, pose.position)
                      if config.attitude == "track" else pose)
            probe = _edge_spec(n.pose, target, config)
            if n.arrival_time + probe.duration > config.budget + 1e-9:
                continue
            res = connect(n, target, landmarks, sensors, config)
            if res is None:
                continue
            cand = n.cost_to_come + res.cost
            if best is None or cand < best[0]:
                best = (cand, n, res, target)
        if best is None:
            failures += 1
            continue
        failures = 0

        cand_cost, parent, res, pose = best
        new = PlanNode(id=len(nodes), pose=pose, parent=parent.id,
                       edge_cost=res.cost, cost_to_come=cand_cost,
                       arrival_state=res.arrival_state,
                       arrival_cov=res.arrival_cov,
                       arrival_time=parent.arrival_time + res.duration,
                       duration=res.duration, mode=res.mode)
        nodes.append(new)
        children[new.id] = []
        children[parent.id].append(new.id)

        # nodes on the new node's root chain must stay put: re-parenting an
        # ancestor through its descendant would close a cycle (edge costs are
        # negative, so cost-to-come alone does not rule this out)
        chain = set(tree.branch(new.id))
        for n in near:
            if n.id in chain:
                continue
            res_rw = connect(new, n.pose, landmarks, sensors, config)
            if res_rw is None:
                continue
            cand = new.cost_to_come + res_rw.cost
            if cand < n.cost_to_come - 1e-12:
                before = n.cost_to_come
                children[n.parent].remove(n.id)
                children[new.id].append(n.id)
                n.parent = new.id
                n.edge_cost = res_rw.cost
                n.mode = res_rw.mode
                n.duration = res_rw.duration
                n.arrival_state = res_rw.arrival_state
                n.arrival_cov = res_rw.arrival_cov
                n.cost_to_come = cand
                n.arrival_time = new.arrival_time + res_rw.duration
                _reforecast_subtree(tree, n, config.rewire_depth, landmarks,
                                    sensors, config)
                _recompute_totals(tree, n)
                assert n.cost_to_come <= before + 1e-12, "rewiring raised a cost"

    eligible = [n for n in nodes if n.arrival_time <= config.budget + 1e-9]
    best_node = min(eligible, key=lambda n: (n.cost_to_come, n.id))
    return _extract_path(tree, best_node.id), tree


def _reforecast_subtree(tree, node, depth, landmarks, sensors, config):
    # refresh forecasts below a node whose arrival covariance changed
    if depth <= 0:
        return
    for cid in tree.children[node.id]:
        child = tree.nodes[cid]
        res = connect(node, child.pose, landmarks, sensors, config)
        if res is not None:
            child.edge_cost = res.cost
            child.duration = res.duration
            child.arrival_state = res.arrival_state
            child.arrival_cov = res.arrival_cov
        _reforecast_subtree(tree, child, depth - 1, landmarks, sensors, config)


def _recompute_totals(tree, node):
    # restore cost/time additivity over the whole subtree from stored edges
    for cid in tree.children[node.id]:
        child = tree.nodes[cid]
        child.cost_to_come = node.cost_to_come + child.edge_cost
        child.arrival_time = node.arrival_time + child.duration
        _recompute_totals(tree, child)


def greedy_plan(config, init_state, init_cov, landmarks, sensors, rng=None):
    """Myopic baseline: commit to the best of ``candidate_count`` samples.

    Each round samples candidates, scores the feasible ones with the same
    Connect edge model, appends the minimum-cost candidate (ties to the
    lowest sample index) and repeats until no candidate fits the remaining
    budget.  A fully infeasible sample set is redrawn once; two failed rounds
    in a row end the plan.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cur = _root_node(init_state, init_cov)
    poses = [cur.pose]
    durations, edge_costs, modes, covs = [], [], [], [cur.arrival_cov]

    while True:
        chosen = None
        budget_exhausted = False
        for _attempt in range(2):
            cands = [sample_pose(config.bounds, rng, config.attitude)
                     for _ in range(config.candidate_count)]
            over_budget = 0
            for i, cand in enumerate(cands):
                if config.attitude == "track":
                    cand = _facing_pose(cur.pose, cand.position)
                probe = _edge_spec(cur.pose, cand, config)
                if cur.arrival_time + probe.duration > config.budget + 1e-9:
                    over_budget += 1
                    continue
                res = connect(cur, cand, landmarks, sensors, config)
                if res is None:
                    continue
                if chosen is None or res.cost < chosen[1].cost:
                    chosen = (cand, res)
            if chosen is not None:
                break
            if over_budget == len(cands):
                budget_exhausted = True
                break
        if chosen is None:
            if not budget_exhausted and len(poses) == 1:
                raise PlannerError("greedy planner found no feasible first edge")
            break
        cand, res = chosen
        cur = PlanNode(id=cur.id + 1, pose=cand, parent=None,
                       edge_cost=res.cost,
                       cost_to_come=cur.cost_to_come + res.cost,
                       arrival_state=res.arrival_state,
                       arrival_cov=res.arrival_cov,
                       arrival_time=cur.arrival_time + res.duration,
                       duration=res.duration)
        poses.append(cand)
        durations.append(res.duration)
        edge_costs.append(res.cost)
        modes.append(res.mode)
        covs.append(res.arrival_cov)

    return PlannedPath(poses=poses, durations=durations, edge_costs=edge_costs,
                       modes=modes, planned_covs=covs,
                       cost=sum(edge_costs))


def plan_tree_rows(tree):
    """Flatten a tree for CSV emission: id, parent, cost, time, pose."""
    from .rotations import rotmat_to_quat
    rows = []
    for n in tree.nodes:
        q = rotmat_to_quat(n.pose.rotation)
        rows.append((n.id, -1 if n.parent is None else n.parent,
                     n.cost_to_come, n.arrival_time,
                     *n.pose.position, *q))
    return rows

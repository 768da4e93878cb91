import numpy as np
import pytest

from biasplan.rotations import is_rotation, random_rotation, so3_exp, so3_log
from biasplan.trajectory import (
    SegmentSpec,
    default_kernel,
    hold_segment,
    interpolate_segment,
    segment_duration_heuristic,
)


def _rest_spec(start, end, duration=2.0, rate=100.0, **kwargs):
    return SegmentSpec(start_pos=np.asarray(start, dtype=float),
                       end_pos=np.asarray(end, dtype=float),
                       duration=duration, sample_rate=rate, **kwargs)


def test_degenerate_segment_is_constant():
    seg = interpolate_segment(_rest_spec([1.0, -2.0, 0.5], [1.0, -2.0, 0.5]))
    np.testing.assert_allclose(seg.pos, np.tile([1.0, -2.0, 0.5], (len(seg), 1)),
                               atol=1e-6)
    np.testing.assert_allclose(seg.vel, 0.0, atol=1e-6)
    np.testing.assert_allclose(seg.acc, 0.0, atol=1e-6)
    np.testing.assert_allclose(seg.angvel, 0.0, atol=1e-6)


def test_endpoints_hit_boundary_conditions():
    rng = np.random.default_rng(4)
    for _ in range(10):
        spec = _rest_spec(rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3),
                          duration=float(rng.uniform(1.0, 4.0)))
        seg = interpolate_segment(spec)
        np.testing.assert_allclose(seg.pos[0], spec.start_pos, atol=1e-4)
        np.testing.assert_allclose(seg.pos[-1], spec.end_pos, atol=1e-4)
        np.testing.assert_allclose(seg.vel[0], 0.0, atol=1e-4)
        np.testing.assert_allclose(seg.vel[-1], 0.0, atol=1e-4)


def test_straight_line_velocity_profile():
    seg = interpolate_segment(_rest_spec([0, 0, 0], [1, 0, 0]))
    vx = seg.vel[:, 1:]
    np.testing.assert_allclose(vx, 0.0, atol=1e-9)  # off-axis stays put
    v = seg.vel[:, 0]
    assert abs(v[0]) < 1e-6 and abs(v[-1]) < 1e-6
    # single interior maximum: the sign of dv changes exactly once
    dv = np.diff(v)
    flips = np.sum(np.abs(np.diff(np.sign(dv[np.abs(dv) > 1e-12]))) > 0)
    assert flips == 1
    assert v.max() > 0.5  # faster than the chord speed somewhere


def test_velocity_matches_position_differences():
    rng = np.random.default_rng(8)
    for _ in range(5):
        spec = _rest_spec(rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3),
                          duration=2.0, rate=200.0)
        seg = interpolate_segment(spec)
        dt = seg.times[1] - seg.times[0]
        fd = (seg.pos[2:] - seg.pos[:-2]) / (2.0 * dt)
        tol = max(1e-3, 0.01 * np.abs(seg.vel).max())
        np.testing.assert_allclose(seg.vel[1:-1], fd, atol=tol)


def test_acceleration_matches_velocity_differences():
    spec = _rest_spec([0, 0, 0], [2, -1, 1], duration=2.0, rate=200.0)
    seg = interpolate_segment(spec)
    dt = seg.times[1] - seg.times[0]
    fd = (seg.vel[2:] - seg.vel[:-2]) / (2.0 * dt)
    tol = max(1e-3, 0.01 * np.abs(seg.acc).max())
    np.testing.assert_allclose(seg.acc[1:-1], fd, atol=tol)


def test_grid_spacing_is_exact():
    seg = interpolate_segment(_rest_spec([0, 0, 0], [1, 1, 0], duration=1.03,
                                         rate=20.0))
    np.testing.assert_allclose(np.diff(seg.times), 0.05, atol=1e-12)
    # duration snapped up to a whole number of intervals
    assert seg.duration == pytest.approx(1.05)


def test_rotation_channel_reaches_target():
    rng = np.random.default_rng(15)
    for _ in range(10):
        R0 = random_rotation(rng)
        phi = rng.uniform(-1.0, 1.0, 3)
        R1 = R0 @ so3_exp(phi)
        spec = _rest_spec([0, 0, 0], [1, 0, 0], start_rot=R0, end_rot=R1)
        seg = interpolate_segment(spec)
        np.testing.assert_allclose(seg.rot[0], R0, atol=1e-5)
        np.testing.assert_allclose(seg.rot[-1], R1, atol=1e-5)
        for k in range(0, len(seg), 50):
            assert is_rotation(seg.rot[k])


def test_rotation_near_pi_rejected():
    R1 = so3_exp(np.array([0.0, 0.0, np.pi - 0.001]))
    spec = _rest_spec([0, 0, 0], [1, 0, 0], end_rot=R1)
    with pytest.raises(ValueError):
        interpolate_segment(spec)


def test_angular_rate_matches_chart_differences():
    R1 = so3_exp(np.array([0.4, -0.2, 0.9]))
    spec = _rest_spec([0, 0, 0], [1, 0, 0], end_rot=R1, duration=2.0,
                      rate=200.0)
    seg = interpolate_segment(spec)
    dt = seg.times[1] - seg.times[0]
    phi = np.array([so3_log(seg.rot[0].T @ R) for R in seg.rot])
    fd = (phi[2:] - phi[:-2]) / (2.0 * dt)
    tol = max(1e-3, 0.02 * np.abs(seg.angvel).max())
    np.testing.assert_allclose(seg.angvel[1:-1], fd, atol=tol)


def test_hold_segment_is_still():
    R = so3_exp(np.array([0.1, 0.2, 0.3]))
    seg = hold_segment(np.array([1.0, 2.0, 3.0]), R, duration=0.8,
                       sample_rate=50.0)
    np.testing.assert_allclose(seg.pos, np.tile([1.0, 2.0, 3.0], (len(seg), 1)),
                               atol=1e-6)
    np.testing.assert_allclose(seg.vel, 0.0, atol=1e-6)
    np.testing.assert_allclose(seg.rot - R[None], 0.0, atol=1e-6)


def test_duration_heuristic_floor():
    spec = _rest_spec([0, 0, 0], [0, 0, 0])
    assert segment_duration_heuristic(spec, 1.0, 1.0) == pytest.approx(0.5)


def test_duration_heuristic_unit_case():
    spec = _rest_spec([0, 0, 0], [1, 0, 0])
    assert segment_duration_heuristic(spec, 1.0, 1.0) == pytest.approx(2.0)


def test_duration_heuristic_monotone_in_distance():
    rng = np.random.default_rng(21)
    for _ in range(30):
        d = rng.uniform(0.0, 5.0)
        near = _rest_spec([0, 0, 0], [d, 0, 0])
        far = _rest_spec([0, 0, 0], [2.0 * d, 0, 0])
        assert (segment_duration_heuristic(far, 1.0, 2.0)
                >= segment_duration_heuristic(near, 1.0, 2.0))


def test_duration_heuristic_validates_limits():
    spec = _rest_spec([0, 0, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        segment_duration_heuristic(spec, 0.0, 1.0)


def test_default_kernel_ties_lengthscale_to_duration():
    p = default_kernel(3.0)
    assert p.lengthscale == pytest.approx(1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        _rest_spec([0, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        _rest_spec([0, 0, 0], [1, 0, 0], duration=0.0)
    with pytest.raises(ValueError):
        SegmentSpec(start_pos=np.zeros(3), end_pos=np.ones(3),
                    start_rot=np.ones((3, 3)))


def test_junction_continuity_when_chained():
    # two segments sharing a waypoint meet with matching pos/vel/acc and
    # orientation; the planner relies on this when executing chained plans
    rng = np.random.default_rng(33)
    for _ in range(10):
        mid = rng.uniform(-2, 2, 3)
        R_mid = random_rotation(rng)
        a = _rest_spec(rng.uniform(-2, 2, 3), mid, end_rot=R_mid)
        b = _rest_spec(mid, rng.uniform(-2, 2, 3), start_rot=R_mid)
        seg_a, seg_b = interpolate_segment(a), interpolate_segment(b)
        np.testing.assert_allclose(seg_a.pos[-1], seg_b.pos[0], atol=1e-6)
        np.testing.assert_allclose(seg_a.vel[-1], seg_b.vel[0], atol=1e-6)
        np.testing.assert_allclose(seg_a.acc[-1], seg_b.acc[0], atol=1e-6)
        np.testing.assert_allclose(
            so3_log(seg_a.rot[-1].T @ seg_b.rot[0]), 0.0, atol=1e-6)

"""Error-state filter: prediction, range updates, covariance forecasting."""

import numpy as np
import pytest

from biasplan.eskf import (
    BIAS_F,
    BIAS_W,
    ERROR_DIM,
    POS,
    THETA,
    VEL,
    EstimatorState,
    Landmark,
    RangeMeasurement,
    SensorConfig,
    check_covariance,
    error_state_jacobians,
    forecast_covariance,
    initial_covariance,
    predict,
    process_noise_sigma,
    range_jacobian,
    trace_bias,
    trace_position,
    update_range,
)
from biasplan.imu import ImuNoiseSpec, ImuSample, TrueState, integrate_kinematics, synthesize_imu
from biasplan.rotations import random_rotation, so3_exp, so3_log
from biasplan.trajectory import SegmentSpec, TrajectorySegment, interpolate_segment


def _state(rng=None, R=None):
    if rng is None:
        return EstimatorState(r=np.zeros(3), v=np.zeros(3), R=np.eye(3) if R is None else R)
    return EstimatorState(
        r=rng.normal(size=3), v=rng.normal(size=3),
        R=random_rotation(rng) if R is None else R,
        b_f=0.1 * rng.normal(size=3), b_w=0.01 * rng.normal(size=3))


def _tetrahedron_landmarks(scale=6.0):
    corners = [(1, 1, 1), (-1, 1, -1), (1, -1, -1), (-1, -1, 1)]
    return [Landmark(i, scale * np.asarray(c, dtype=float)) for i, c in enumerate(corners)]


def _constant_velocity_segment(v, duration, sample_rate=20.0):
    n = int(round(duration * sample_rate)) + 1
    times = np.arange(n) / sample_rate
    return TrajectorySegment(
        times=times, pos=times[:, None] * v, vel=np.tile(v, (n, 1)),
        acc=np.zeros((n, 3)), rot=np.tile(np.eye(3), (n, 1, 1)),
        angvel=np.zeros((n, 3)))


# ---------------------------------------------------------------------------
# covariance plumbing


def test_initial_covariance_is_diagonal_with_squared_sigmas():
    P = initial_covariance(0.3, 0.1, 0.01, 0.05, 1e-4)
    expected = np.concatenate([np.full(3, s ** 2)
                               for s in (0.3, 0.1, 0.01, 0.05, 1e-4)])
    np.testing.assert_allclose(np.diag(P), expected, rtol=0.0)
    assert np.all(P == np.diag(np.diag(P)))


def test_trace_helpers_on_identity():
    P = np.eye(ERROR_DIM)
    assert trace_bias(P) == 6.0
    assert trace_position(P) == 3.0


def test_trace_bias_sums_both_bias_blocks():
    P = np.zeros((ERROR_DIM, ERROR_DIM))
    P[BIAS_F, BIAS_F] = 2.0 * np.eye(3)
    P[BIAS_W, BIAS_W] = 3.0 * np.eye(3)
    assert trace_bias(P) == 15.0
    assert trace_position(P) == 0.0


def test_trace_invariant_under_symmetrization():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(ERROR_DIM, ERROR_DIM))
    sym = 0.5 * (M + M.T)
    assert trace_bias(M) == pytest.approx(trace_bias(sym), abs=1e-12)
    assert trace_position(M) == pytest.approx(trace_position(sym), abs=1e-12)


def test_check_covariance_rejects_bad_matrices():
    with pytest.raises(ValueError):
        check_covariance(np.eye(3))
    P = np.eye(ERROR_DIM)
    P[0, 1] = 0.5
    with pytest.raises(ValueError):
        check_covariance(P)
    with pytest.raises(ValueError):
        check_covariance(-np.eye(ERROR_DIM))
    check_covariance(initial_covariance(1.0, 1.0, 1.0, 1.0, 1.0))


# ---------------------------------------------------------------------------
# prediction


def test_predict_zero_noise_zero_cov_stays_zero():
    noise = ImuNoiseSpec(sigma_f=0.0, sigma_w=0.0, sigma_bf=0.0, sigma_bw=0.0)
    state = _state()
    P = np.zeros((ERROR_DIM, ERROR_DIM))
    sample = ImuSample(t=0.0, f_tilde=np.array([0.1, 0.0, 9.81]),
                       omega_tilde=np.array([0.0, 0.2, 0.0]))
    for _ in range(20):
        state, P = predict(state, P, sample, 0.01, noise)
    np.testing.assert_array_equal(P, np.zeros((ERROR_DIM, ERROR_DIM)))


def test_predict_from_zero_cov_injects_discrete_noise():
    # With P = 0 the propagated term vanishes and one step leaves exactly
    # G Sigma G^T: measurement noises scale with dt^2, bias walks with dt.
    rng = np.random.default_rng(5)
    noise = ImuNoiseSpec(sigma_f=0.02, sigma_w=0.002, sigma_bf=1e-3, sigma_bw=1e-4)
    state = _state(rng)
    dt = 0.01
    sample = ImuSample(t=0.0, f_tilde=state.b_f.copy(), omega_tilde=state.b_w.copy())
    _, P = predict(state, np.zeros((ERROR_DIM, ERROR_DIM)), sample, dt, noise)
    expected = np.zeros((ERROR_DIM, ERROR_DIM))
    expected[VEL, VEL] = noise.sigma_f ** 2 * dt ** 2 * np.eye(3)
    expected[THETA, THETA] = noise.sigma_w ** 2 * dt ** 2 * np.eye(3)
    expected[BIAS_F, BIAS_F] = noise.sigma_bf ** 2 * dt * np.eye(3)
    expected[BIAS_W, BIAS_W] = noise.sigma_bw ** 2 * dt * np.eye(3)
    np.testing.assert_allclose(P, expected, atol=1e-18)


def test_predict_small_dt_approaches_additive_noise_update():
    # As dt -> 0 the Jacobian couplings vanish and the recursion degenerates
    # to P <- P + G Sigma G^T; the diagonal converges at O(dt^2).
    noise = ImuNoiseSpec(sigma_f=0.02, sigma_w=0.002, sigma_bf=1e-3, sigma_bw=1e-4)
    state = _state()
    sample = ImuSample(t=0.0, f_tilde=np.zeros(3), omega_tilde=np.zeros(3))
    for dt in (1e-3, 1e-4):
        P0 = np.eye(ERROR_DIM)
        _, P1 = predict(state, P0, sample, dt, noise)
        _, G = error_state_jacobians(state.R, np.zeros(3), np.zeros(3), dt, noise)
        additive = P0 + (G * process_noise_sigma(noise)) @ G.T
        np.testing.assert_allclose(np.diag(P1), np.diag(additive), atol=2.0 * dt * dt)


def test_predict_mean_matches_noiseless_kinematics():
    # When the bias estimates equal the true biases, the nominal propagation
    # reproduces the truth integrator on noiseless samples.
    rng = np.random.default_rng(8)
    noise = ImuNoiseSpec(sigma_f=0.0, sigma_w=0.0, sigma_bf=0.0, sigma_bw=0.0)
    truth = TrueState(r=rng.normal(size=3), v=rng.normal(size=3),
                      R=random_rotation(rng), b_f=0.1 * rng.normal(size=3),
                      b_w=0.01 * rng.normal(size=3))
    state = EstimatorState(r=truth.r.copy(), v=truth.v.copy(), R=truth.R.copy(),
                           b_f=truth.b_f.copy(), b_w=truth.b_w.copy())
    P = initial_covariance(0.1, 0.1, 0.01, 0.01, 1e-4)
    dt = 0.005
    f_world = np.array([0.4, -0.2, 0.1])
    omega_body = np.array([0.3, 0.1, -0.2])
    for k in range(40):
        sample = synthesize_imu(truth, f_world, omega_body, noise, t=k * dt)
        truth = integrate_kinematics(truth, sample, noise, dt)
        state, P = predict(state, P, sample, dt, noise)
    np.testing.assert_allclose(state.r, truth.r, atol=1e-12)
    np.testing.assert_allclose(state.v, truth.v, atol=1e-12)
    np.testing.assert_allclose(state.R, truth.R, atol=1e-12)


def _inject(state, dx):
    return EstimatorState(
        r=state.r + dx[POS], v=state.v + dx[VEL],
        R=state.R @ so3_exp(dx[THETA]),
        b_f=state.b_f + dx[BIAS_F], b_w=state.b_w + dx[BIAS_W])


def _error_between(base, other):
    dx = np.zeros(ERROR_DIM)
    dx[POS] = other.r - base.r
    dx[VEL] = other.v - base.v
    dx[THETA] = so3_log(base.R.T @ other.R)
    dx[BIAS_F] = other.b_f - base.b_f
    dx[BIAS_W] = other.b_w - base.b_w
    return dx


def test_predict_jacobian_matches_finite_difference():
    rng = np.random.default_rng(21)
    noise = ImuNoiseSpec()
    dt, h = 0.01, 1e-6
    P = np.zeros((ERROR_DIM, ERROR_DIM))
    for _ in range(20):
        state = _state(rng)
        sample = ImuSample(t=0.0, f_tilde=2.0 * rng.normal(size=3),
                           omega_tilde=rng.normal(size=3))
        f_hat = sample.f_tilde - state.b_f
        w_hat = sample.omega_tilde - state.b_w
        F, _ = error_state_jacobians(state.R, f_hat, w_hat, dt, noise)
        base, _ = predict(state, P, sample, dt, noise)
        F_fd = np.zeros_like(F)
        for j in range(ERROR_DIM):
            dx = np.zeros(ERROR_DIM)
            dx[j] = h
            plus, _ = predict(_inject(state, dx), P, sample, dt, noise)
            minus, _ = predict(_inject(state, -dx), P, sample, dt, noise)
            F_fd[:, j] = (_error_between(base, plus) - _error_between(base, minus)) / (2.0 * h)
        assert np.abs(F - F_fd).max() <= 1e-5


def test_predict_rejects_nonpositive_dt():
    state = _state()
    P = np.zeros((ERROR_DIM, ERROR_DIM))
    sample = ImuSample(t=0.0, f_tilde=np.zeros(3), omega_tilde=np.zeros(3))
    with pytest.raises(ValueError):
        predict(state, P, sample, 0.0, ImuNoiseSpec())


# ---------------------------------------------------------------------------
# range updates


def test_update_zero_innovation_keeps_mean_and_shrinks_trace():
    state = _state()
    P = initial_covariance(0.5, 0.1, 0.01, 0.05, 1e-4)
    lm = Landmark(0, np.array([5.0, 0.0, 0.0]))
    meas = RangeMeasurement(t=0.0, landmark_id=0, range=5.0, noise_std=0.1)
    new, P_new = update_range(state, P, meas, [lm])
    np.testing.assert_array_equal(new.r, state.r)
    np.testing.assert_array_equal(new.v, state.v)
    np.testing.assert_array_equal(new.R, state.R)
    np.testing.assert_array_equal(new.b_f, state.b_f)
    assert np.trace(P_new) < np.trace(P)
    check_covariance(P_new)


def test_update_matches_scalar_kalman_along_one_axis():
    # Landmark on the x axis, diagonal P: the update must reduce to a scalar
    # Kalman step on x position with H = -1.
    p, var, d = 0.25, 0.01, 8.0
    state = _state()
    P = initial_covariance(np.sqrt(p), 0.1, 0.01, 0.05, 1e-4)
    z = d + 0.3
    meas = RangeMeasurement(t=0.0, landmark_id=0, range=z, noise_std=np.sqrt(var))
    new, P_new = update_range(state, P, meas, [Landmark(0, np.array([d, 0.0, 0.0]))])
    S = p + var
    gain = -p / S
    assert new.r[0] == pytest.approx(gain * (z - d), abs=1e-10)
    assert P_new[0, 0] == pytest.approx(p - p * p / S, abs=1e-10)
    assert P_new[1, 1] == pytest.approx(P[1, 1], abs=1e-12)


def test_update_joseph_form_agrees_with_standard_form():
    rng = np.random.default_rng(13)
    state = _state(rng)
    A = rng.normal(size=(ERROR_DIM, ERROR_DIM)) * 0.1
    P = A @ A.T + 0.01 * np.eye(ERROR_DIM)
    lm = Landmark(0, state.r + np.array([4.0, 1.0, -2.0]))
    rho = float(np.linalg.norm(state.r - lm.position))
    meas = RangeMeasurement(t=0.0, landmark_id=0, range=rho + 0.2, noise_std=0.1)
    new_a, P_a = update_range(state, P, meas, [lm], joseph=False)
    new_b, P_b = update_range(state, P, meas, [lm], joseph=True)
    np.testing.assert_allclose(P_a, P_b, atol=1e-10)
    np.testing.assert_allclose(new_a.r, new_b.r, atol=1e-12)


def test_update_at_landmark_position_warns_and_skips():
    state = _state()
    P = initial_covariance(0.5, 0.1, 0.01, 0.05, 1e-4)
    lm = Landmark(0, np.zeros(3))
    meas = RangeMeasurement(t=0.0, landmark_id=0, range=1.0, noise_std=0.1)
    with pytest.warns(UserWarning):
        new, P_new = update_range(state, P, meas, [lm])
    np.testing.assert_array_equal(new.r, state.r)
    np.testing.assert_array_equal(P_new, P)


def test_update_accepts_dict_or_list_maps():
    state = _state()
    P = initial_covariance(0.5, 0.1, 0.01, 0.05, 1e-4)
    lms = _tetrahedron_landmarks()
    meas = RangeMeasurement(t=0.0, landmark_id=2, range=9.5, noise_std=0.1)
    _, P_list = update_range(state, P, meas, lms)
    _, P_dict = update_range(state, P, meas, {lm.id: lm for lm in lms})
    np.testing.assert_array_equal(P_list, P_dict)


def test_range_jacobian_row_is_unit_direction():
    H, rho = range_jacobian(np.array([3.0, 0.0, 4.0]), np.zeros(3))
    assert rho == pytest.approx(5.0)
    np.testing.assert_allclose(H[0, POS], np.array([0.6, 0.0, 0.8]))
    assert np.all(H[0, 3:] == 0.0)
    H_bad, _ = range_jacobian(np.zeros(3), np.zeros(3))
    assert H_bad is None


def test_static_updates_collapse_position_trace():
    rng = np.random.default_rng(42)
    truth_pos = np.array([0.5, -0.3, 0.2])
    state = EstimatorState(r=truth_pos.copy(), v=np.zeros(3), R=np.eye(3))
    P = initial_covariance(1.0, 0.1, 0.01, 0.05, 1e-4)
    prior = trace_position(P)
    lms = _tetrahedron_landmarks(scale=8.0)
    for k in range(50):
        lm = lms[k % len(lms)]
        true_range = float(np.linalg.norm(truth_pos - lm.position))
        z = true_range + 0.1 * rng.normal()
        meas = RangeMeasurement(t=0.05 * k, landmark_id=lm.id, range=z, noise_std=0.1)
        state, P = update_range(state, P, meas, lms)
    assert trace_position(P) < 0.1 * prior
    check_covariance(P)


@pytest.mark.parametrize("kwargs", [
    dict(range=-1.0, noise_std=0.1),
    dict(range=1.0, noise_std=0.0),
])
def test_range_measurement_validation(kwargs):
    with pytest.raises(ValueError):
        RangeMeasurement(t=0.0, landmark_id=0, **kwargs)


def test_estimator_state_rejects_non_rotation():
    with pytest.raises(ValueError):
        EstimatorState(r=np.zeros(3), v=np.zeros(3), R=2.0 * np.eye(3))


# ---------------------------------------------------------------------------
# forecasting


def _forecast_setup():
    noise = ImuNoiseSpec(sigma_f=0.0196, sigma_w=0.0017, sigma_bf=5e-4, sigma_bw=2e-5)
    sensors = SensorConfig(imu_rate=200.0, range_rate=5.0, range_noise_std=0.1,
                           noise=noise)
    P = initial_covariance(0.3, 0.1, 0.01, 0.1, 1e-4)
    state = _state()
    return state, P, sensors


def test_forecast_empty_map_trace_never_shrinks():
    state, P, sensors = _forecast_setup()
    seg = interpolate_segment(SegmentSpec(
        start_pos=np.zeros(3), end_pos=np.array([4.0, 0.0, 0.0]), duration=8.0))
    _, P_end = forecast_covariance(state, P, seg, [], sensors)
    assert np.trace(P_end) >= np.trace(P)
    check_covariance(P_end)


def test_forecast_zero_length_segment_returns_cov_unchanged():
    state, P, sensors = _forecast_setup()
    seg = TrajectorySegment(
        times=np.zeros(1), pos=np.zeros((1, 3)), vel=np.zeros((1, 3)),
        acc=np.zeros((1, 3)), rot=np.eye(3)[None], angvel=np.zeros((1, 3)))
    arrival, P_end = forecast_covariance(state, P, seg, _tetrahedron_landmarks(), sensors)
    np.testing.assert_array_equal(P_end, P)
    np.testing.assert_array_equal(arrival.r, seg.pos[0])


def test_forecast_excitation_beats_constant_velocity_on_bias_trace():
    state, P, sensors = _forecast_setup()
    lms = _tetrahedron_landmarks()
    v = np.array([0.5, 0.0, 0.0])
    duration = 8.0
    bland = _constant_velocity_segment(v, duration)
    axis = np.array([1.0, 1.0, 0.5])
    axis /= np.linalg.norm(axis)
    rich = interpolate_segment(SegmentSpec(
        start_pos=np.zeros(3), end_pos=v * duration,
        end_rot=so3_exp(2.0 * axis), duration=duration))
    _, P_bland = forecast_covariance(state, P, bland, lms, sensors)
    _, P_rich = forecast_covariance(state, P, rich, lms, sensors)
    assert trace_bias(P_rich) < trace_bias(P_bland)


def test_forecast_is_deterministic():
    state, P, sensors = _forecast_setup()
    seg = interpolate_segment(SegmentSpec(
        start_pos=np.zeros(3), end_pos=np.array([2.0, 1.0, 0.5]),
        end_rot=so3_exp(np.array([0.0, 0.0, 1.2])), duration=6.0))
    lms = _tetrahedron_landmarks()
    _, P_a = forecast_covariance(state, P, seg, lms, sensors)
    _, P_b = forecast_covariance(state, P, seg, lms, sensors)
    np.testing.assert_array_equal(P_a, P_b)


def test_forecast_bias_trace_decreases_window_over_window():
    # Persistent excitation: chaining rotating segments keeps shrinking the
    # bias block until it reaches its floor.
    state, P, sensors = _forecast_setup()
    lms = _tetrahedron_landmarks()
    rng = np.random.default_rng(7)
    traces = [trace_bias(P)]
    pos, R = np.zeros(3), np.eye(3)
    for k in range(4):
        target = pos + np.array([4.0, 0.0, 0.0]) * (1.0 if k % 2 == 0 else -1.0)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        R_next = R @ so3_exp(1.5 * axis)
        seg = interpolate_segment(SegmentSpec(
            start_pos=pos, end_pos=target, start_rot=R, end_rot=R_next,
            duration=10.0))
        state, P = forecast_covariance(state, P, seg, lms, sensors)
        traces.append(trace_bias(P))
        pos, R = target, R_next
    assert all(b < a for a, b in zip(traces, traces[1:]))


def test_covariance_stays_symmetric_psd_through_random_cycles():
    rng = np.random.default_rng(99)
    noise = ImuNoiseSpec(sigma_f=0.0196, sigma_w=0.0017, sigma_bf=5e-4, sigma_bw=2e-5)
    state = _state(rng)
    P = initial_covariance(0.3, 0.1, 0.01, 0.1, 1e-4)
    lms = _tetrahedron_landmarks(scale=10.0)
    dt = 0.005
    for k in range(10_000):
        sample = ImuSample(t=k * dt, f_tilde=2.0 * rng.normal(size=3),
                           omega_tilde=0.5 * rng.normal(size=3))
        state, P = predict(state, P, sample, dt, noise)
        if k % 10 == 9:
            lm = lms[(k // 10) % len(lms)]
            rho = float(np.linalg.norm(state.r - lm.position))
            if rho > 1e-6:
                meas = RangeMeasurement(t=k * dt, landmark_id=lm.id,
                                        range=rho + 0.5 * rng.normal(),
                                        noise_std=0.5)
                state, P = update_range(state, P, meas, lms)
        if k % 500 == 499:
            assert np.abs(P - P.T).max() <= 1e-12 * max(1.0, np.trace(P))
            assert np.linalg.eigvalsh(P).min() >= -1e-8 * np.trace(P)
    assert np.linalg.eigvalsh(P).min() >= -1e-8 * np.trace(P)

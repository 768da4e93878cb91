"""Error-state Kalman filter over pose, velocity and IMU biases.

The nominal state carries position, velocity, a body-to-world rotation matrix
and the two IMU biases (plus frozen body-to-sensor extrinsics).  The error
state is 15-dimensional:

    [d_r, d_v, d_theta, d_bf, d_bw]

with the rotation error applied on the right: R_true = R_est @ so3_exp(d_theta).
Prediction propagates P <- F P F^T + G Sigma G^T with the exact discrete
error-state Jacobians; range-to-landmark updates correct the error and inject
it back into the nominal state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .imu import ImuNoiseSpec, TrueState, _vec3
from .rotations import is_rotation, skew, so3_exp, so3_right_jacobian

ERROR_DIM = 15
POS = slice(0, 3)
VEL = slice(3, 6)
THETA = slice(6, 9)
BIAS_F = slice(9, 12)
BIAS_W = slice(12, 15)
BIAS = slice(9, 15)

# Ranges shorter than this give an undefined bearing; such measurements are
# skipped.
_MIN_RANGE = 1e-9


@dataclass
class EstimatorState:
    """Nominal filter state.  Extrinsics (c, z) are carried but frozen."""

    r: np.ndarray
    v: np.ndarray
    R: np.ndarray
    b_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))
    z: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.r = _vec3(self.r, "r")
        self.v = _vec3(self.v, "v")
        self.b_f = _vec3(self.b_f, "b_f")
        self.b_w = _vec3(self.b_w, "b_w")
        self.R = np.asarray(self.R, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if not is_rotation(self.R):
            raise ValueError("R is not a rotation matrix")

    def copy(self):
        return EstimatorState(self.r.copy(), self.v.copy(), self.R.copy(),
                              self.b_f.copy(), self.b_w.copy(),
                              self.c.copy(), self.z.copy())


@dataclass(frozen=True)
class Landmark:
    id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))


@dataclass(frozen=True)
class RangeMeasurement:
    t: float
    landmark_id: int
    range: float
    noise_std: float

    def __post_init__(self):
        if self.range < 0.0:
            raise ValueError("range must be non-negative")
        if self.noise_std <= 0.0:
            raise ValueError("noise_std must be positive")


@dataclass(frozen=True)
class SensorConfig:
    """Rates and noise of the simulated sensor suite.

    ``round_robin=True`` interrogates a single anchor per range epoch,
    cycling through the map in id order (TDMA-style radio); the default
    measures every visible anchor each epoch.
    """

    imu_rate: float = 200.0
    range_rate: float = 20.0
    range_noise_std: float = 0.02
    max_range: float | None = None
    round_robin: bool = False
    noise: ImuNoiseSpec = field(default_factory=ImuNoiseSpec)


def initial_covariance(sigma_pos, sigma_vel, sigma_theta, sigma_bf, sigma_bw):
    """Diagonal 15x15 covariance from per-block standard deviations."""
    d = np.concatenate([np.full(3, s ** 2) for s in
                        (sigma_pos, sigma_vel, sigma_theta, sigma_bf, sigma_bw)])
    return np.diag(d)


def check_covariance(P, tol=1e-9):
    """Raise if P is not a symmetric PSD 15x15 matrix (used by tests)."""
    P = np.asarray(P)
    if P.shape != (ERROR_DIM, ERROR_DIM):
        raise ValueError("covariance must be 15x15")
    if np.abs(P - P.T).max() > tol:
        raise ValueError("covariance not symmetric")
    if np.linalg.eigvalsh(P).min() < -tol:
        raise ValueError("covariance not positive semidefinite")


def trace_bias(P):
    """Trace of the joint bias block (accelerometer and gyroscope)."""
    return float(np.trace(P[BIAS, BIAS]))


def trace_position(P):
    """Trace of the position block."""
    return float(np.trace(P[POS, POS]))


def error_state_jacobians(R, f_hat, w_hat, dt, noise):
    """Discrete error-state Jacobians F (15x15) and G (15x12).

    ``f_hat``/``w_hat`` are the bias-corrected specific force and angular
    rate used for the step.  Noise input order: [eta_f, eta_w, eta_bf,
    eta_bw]; the bias rows carry sqrt(dt) so that G Sigma G^T is the exact
    discrete random-walk covariance.
    """
    A = w_hat * dt
    E = so3_exp(A)
    Jr = so3_right_jacobian(A)
    F = np.eye(ERROR_DIM)
    F[POS, VEL] = np.eye(3) * dt
    F[VEL, THETA] = -R @ skew(f_hat) * dt
    F[VEL, BIAS_F] = -R * dt
    F[THETA, THETA] = E.T
    F[THETA, BIAS_W] = -Jr * dt
    G = np.zeros((ERROR_DIM, 12))
    G[VEL, 0:3] = -R * dt
    G[THETA, 3:6] = -Jr * dt
    sq = np.sqrt(dt)
    G[BIAS_F, 6:9] = np.eye(3) * sq
    G[BIAS_W, 9:12] = np.eye(3) * sq
    return F, G


def process_noise_sigma(noise):
    """Diagonal of Sigma_eps for the 12 noise inputs."""
    return np.concatenate([np.full(3, s ** 2) for s in
                           (noise.sigma_f, noise.sigma_w,
                            noise.sigma_bf, noise.sigma_bw)])


def _propagate_cov(P, R, f_hat, w_hat, dt, noise):
    F, G = error_state_jacobians(R, f_hat, w_hat, dt, noise)
    P = F @ P @ F.T + (G * process_noise_sigma(noise)) @ G.T
    return 0.5 * (P + P.T), F


def predict(state, P, sample, dt, noise):
    """One IMU prediction step.

    The nominal state advances with the same first-order discretization as
    :func:`biasplan.imu.integrate_kinematics` (bias-corrected inputs, position
    from the pre-update velocity, velocity from the pre-update orientation);
    the covariance advances with the discrete error-state Jacobians.

    Returns
    -------
    (EstimatorState, ndarray)
        New state and covariance; inputs are not modified.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    f_hat = sample.f_tilde - state.b_f
    w_hat = sample.omega_tilde - state.b_w
    r = state.r + state.v * dt
    v = state.v + (state.R @ f_hat + noise.gravity) * dt
    R = state.R @ so3_exp(w_hat * dt)
    P, _ = _propagate_cov(P, state.R, f_hat, w_hat, dt, noise)
    new = EstimatorState(r=r, v=v, R=R, b_f=state.b_f.copy(),
                         b_w=state.b_w.copy(), c=state.c, z=state.z)
    return new, P


def range_jacobian(r, landmark_pos):
    """Measurement row H (1x15) of a range to a known landmark, or None.

    None signals a degenerate (near-zero) range.
    """
    d = r - landmark_pos
    rho = float(np.linalg.norm(d))
    if rho < _MIN_RANGE:
        return None, rho
    H = np.zeros((1, ERROR_DIM))
    H[0, POS] = d / rho
    return H, rho


def update_range(state, P, meas, landmarks, joseph=False):
    """Scalar EKF update from one range measurement.

    ``landmarks`` maps id -> Landmark (a list of Landmark also works).  The
    error estimate is injected back into the nominal state right away, with
    the rotation correction applied multiplicatively on the right.
    """
    if not isinstance(landmarks, dict):
        landmarks = {lm.id: lm for lm in landmarks}
    lm = landmarks[meas.landmark_id]
    H, rho = range_jacobian(state.r, lm.position)
    if H is None:
        warnings.warn("range measurement at landmark position skipped (H undefined)")
        return state.copy(), P.copy()
    var = meas.noise_std ** 2
    S = float((H @ P @ H.T)[0, 0]) + var
    K = (P @ H.T)[:, 0] / S
    dx = K * (meas.range - rho)
    new = EstimatorState(
        r=state.r + dx[POS],
        v=state.v + dx[VEL],
        R=state.R @ so3_exp(dx[THETA]),
        b_f=state.b_f + dx[BIAS_F],
        b_w=state.b_w + dx[BIAS_W],
        c=state.c, z=state.z)
    IKH = np.eye(ERROR_DIM) - np.outer(K, H[0])
    if joseph:
        P = IKH @ P @ IKH.T + var * np.outer(K, K)
    else:
        P = IKH @ P
    return new, 0.5 * (P + P.T)


def _cov_range_update(P, pos, landmark_pos, noise_var):
    # covariance-only form of update_range (zero innovation)
    d = pos - landmark_pos
    rho = float(np.linalg.norm(d))
    if rho < _MIN_RANGE:
        return P
    h = np.zeros(ERROR_DIM)
    h[POS] = d / rho
    Ph = P @ h
    S = float(h @ Ph) + noise_var
    K = Ph / S
    P = P - np.outer(K, Ph)
    return 0.5 * (P + P.T)


def forecast_covariance(state, P, segment, landmarks, sensors):
    """Deterministic covariance forecast along a planned segment.

    Expected IMU samples are the segment's acceleration/angular-velocity
    channels seen through the measurement model with the *current* bias
    estimates, so the filter mean provably follows the segment; only the
    covariance recursion needs to run.  Range updates against visible
    landmarks have zero expected innovation and reduce P without moving the
    mean.  No randomness anywhere: identical inputs give identical output.

    Returns
    -------
    (EstimatorState, ndarray)
        Arrival state (segment end, biases unchanged) and terminal covariance.
    """
    P = P.copy()
    lms = list(landmarks.values()) if isinstance(landmarks, dict) else list(landmarks)
    n = len(segment)
    if n >= 2:
        dt = float(segment.times[1] - segment.times[0])
        step_rate = 1.0 / dt
        range_every = max(1, int(round(step_rate / sensors.range_rate)))
        noise = sensors.noise
        var_range = sensors.range_noise_std ** 2
        g = noise.gravity
        epoch = 0
        for k in range(1, n):
            Rk = segment.rot[k - 1]
            f_hat = Rk.T @ (segment.acc[k - 1] - g)
            P, _ = _propagate_cov(P, Rk, f_hat, segment.angvel[k - 1], dt, noise)
            if k % range_every == 0:
                pos = segment.pos[k]
                if sensors.round_robin and lms:
                    # anchor cycle restarts per segment; the executed global
                    # cycle differs in phase only
                    chosen = [lms[epoch % len(lms)]]
                    epoch += 1
                else:
                    chosen = lms
                for lm in chosen:
                    if (sensors.max_range is not None
                            and np.linalg.norm(pos - lm.position) > sensors.max_range):
                        continue
                    P = _cov_range_update(P, pos, lm.position, var_range)
    arrival = EstimatorState(
        r=segment.pos[-1].copy(), v=segment.vel[-1].copy(),
        R=segment.rot[-1].copy(), b_f=state.b_f.copy(), b_w=state.b_w.copy(),
        c=state.c, z=state.z)
    return arrival, P

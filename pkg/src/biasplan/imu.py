"""IMU measurement model and first-order strapdown integration.

Measurement model (body frame, R rotates body vectors into world):

    f_tilde     = R.T @ (f_world - g) + b_f + eta_f
    omega_tilde = omega + b_w + eta_w

where ``f_world`` is the kinematic acceleration of the sensor in the world
frame, ``g`` the gravity vector, and the biases follow per-axis Brownian
motion with standard deviation ``sigma_b * sqrt(dt)`` per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rotations import is_rotation, so3_exp

GRAVITY = np.array([0.0, 0.0, -9.81])


def _vec3(v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class ImuNoiseSpec:
    """Per-axis noise magnitudes of the IMU model.

    Attributes
    ----------
    sigma_f, sigma_w : float
        White-noise standard deviation per sample of the specific-force and
        angular-rate channels.
    sigma_bf, sigma_bw : float
        Bias random-walk intensity; the per-step bias increment has standard
        deviation ``sigma_b * sqrt(dt)``.
    gravity : ndarray, shape (3,)
        World-frame gravity vector.
    """

    sigma_f: float = 0.0196
    sigma_w: float = 0.0017
    sigma_bf: float = 0.0
    sigma_bw: float = 0.0
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        for name in ("sigma_f", "sigma_w", "sigma_bf", "sigma_bw"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "gravity", _vec3(self.gravity, "gravity"))

    @property
    def is_noiseless(self):
        return self.sigma_f == self.sigma_w == self.sigma_bf == self.sigma_bw == 0.0


@dataclass
class ImuSample:
    """One IMU reading: timestamp, measured specific force and angular rate."""

    t: float
    f_tilde: np.ndarray
    omega_tilde: np.ndarray

    def __post_init__(self):
        self.f_tilde = _vec3(self.f_tilde, "f_tilde")
        self.omega_tilde = _vec3(self.omega_tilde, "omega_tilde")
        if not np.isfinite(self.t):
            raise ValueError("t must be finite")


@dataclass
class TrueState:
    """Ground-truth kinematic state with the true IMU biases.

    ``R`` rotates body vectors into the world frame.
    """

    r: np.ndarray
    v: np.ndarray
    R: np.ndarray
    b_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.r = _vec3(self.r, "r")
        self.v = _vec3(self.v, "v")
        self.b_f = _vec3(self.b_f, "b_f")
        self.b_w = _vec3(self.b_w, "b_w")
        self.R = np.asarray(self.R, dtype=float)
        if not is_rotation(self.R):
            raise ValueError("R is not a rotation matrix")

    def copy(self):
        return TrueState(self.r.copy(), self.v.copy(), self.R.copy(),
                         self.b_f.copy(), self.b_w.copy())


def synthesize_imu(truth, f_world, omega_body, noise, rng=None, t=0.0):
    """Simulate one IMU reading from ground truth.

    Parameters
    ----------
    truth : TrueState
        Supplies the orientation and the true biases.
    f_world : ndarray, shape (3,)
        Kinematic acceleration of the sensor in the world frame.
    omega_body : ndarray, shape (3,)
        Body-frame angular velocity.
    noise : ImuNoiseSpec
    rng : numpy.random.Generator, optional
        Required when any white-noise sigma is positive.
    t : float
        Timestamp stored on the sample.
    """
    f_world = _vec3(f_world, "f_world")
    omega_body = _vec3(omega_body, "omega_body")
    f = truth.R.T @ (f_world - noise.gravity) + truth.b_f
    w = omega_body + truth.b_w
    if noise.sigma_f > 0.0 or noise.sigma_w > 0.0:
        if rng is None:
            raise ValueError("rng is required when white-noise sigmas are positive")
        f = f + noise.sigma_f * rng.standard_normal(3)
        w = w + noise.sigma_w * rng.standard_normal(3)
    return ImuSample(t=t, f_tilde=f, omega_tilde=w)


def integrate_kinematics(truth, sample, noise, dt, rng=None):
    """Advance the true state by one IMU interval (first-order Euler).

    Update order: position uses the pre-update velocity, the velocity update
    uses the pre-update orientation (derivatives evaluated at the interval
    start), then the orientation advances through the exponential map and the
    biases take one random-walk step of standard deviation ``sigma_b*sqrt(dt)``.

    Returns a new TrueState; the input is not modified.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    f_body = sample.f_tilde - truth.b_f
    w_body = sample.omega_tilde - truth.b_w
    r = truth.r + truth.v * dt
    v = truth.v + (truth.R @ f_body + noise.gravity) * dt
    R = truth.R @ so3_exp(w_body * dt)
    b_f = truth.b_f
    b_w = truth.b_w
    if noise.sigma_bf > 0.0 or noise.sigma_bw > 0.0:
        if rng is None:
            raise ValueError("rng is required when bias random-walk sigmas are positive")
        sq = np.sqrt(dt)
        b_f = b_f + noise.sigma_bf * sq * rng.standard_normal(3)
        b_w = b_w + noise.sigma_bw * sq * rng.standard_normal(3)
    return TrueState(r=r, v=v, R=R, b_f=b_f.copy(), b_w=b_w.copy())

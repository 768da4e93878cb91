"""Trajectory segments between boundary states, interpolated by GP regression.

Each linear axis is a scalar GP conditioned on six noise-tight observations
(position, velocity, acceleration at both endpoints).  Orientation is
interpolated on the rotation-vector chart of ``R_start.T @ R_end``: each chart
component is a scalar GP with four observations (component value and rate at
both endpoints), and the chart rate is exposed as the angular-velocity
channel.  Along a fixed axis the chart rate equals the exact body angular
velocity, since J_r(phi) @ phi == phi; this covers every segment with zero or
axis-parallel boundary rates, which is all the planner ever produces.

The zero-mean GP is run on residuals about the endpoint chord (the straight
line joining the boundary values) so that constant segments come out exactly
constant instead of sagging toward the prior mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gp import GpObservation, KernelParams, posterior_means, solve_observations
from .rotations import is_rotation, so3_exp, so3_log

# Noise variance pinned on boundary observations: tight enough for 1e-6
# endpoint reproduction, loose enough to keep the Gram factorizable.
BOUNDARY_NOISE_VAR = 1e-10

# Relative rotations with angle >= pi - this margin are rejected: the chart
# is ill-conditioned at pi.
ROTATION_MARGIN = 0.01

# Default lengthscale is duration / this factor.
LENGTHSCALE_FACTOR = 3.0


def _vec3(v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,)")
    return v


@dataclass(frozen=True)
class SegmentSpec:
    """Boundary conditions and timing of one trajectory segment."""

    start_pos: np.ndarray
    end_pos: np.ndarray
    start_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    end_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    start_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    end_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    start_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    end_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    start_angvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    end_angvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    duration: float = 1.0
    sample_rate: float = 20.0

    def __post_init__(self):
        for name in ("start_pos", "end_pos", "start_vel", "end_vel",
                     "start_acc", "end_acc", "start_angvel", "end_angvel"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))
        for name in ("start_rot", "end_rot"):
            R = np.asarray(getattr(self, name), dtype=float)
            if not is_rotation(R):
                raise ValueError(f"{name} is not a rotation matrix")
            object.__setattr__(self, name, R)
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.sample_rate <= 0.0:
            raise ValueError("sample_rate must be positive")


@dataclass
class TrajectorySegment:
    """Densely sampled segment: kinematic channels on a uniform time grid."""

    times: np.ndarray        # (N,), strictly increasing, starts at 0
    pos: np.ndarray          # (N, 3)
    vel: np.ndarray          # (N, 3)
    acc: np.ndarray          # (N, 3)
    rot: np.ndarray          # (N, 3, 3), body-to-world
    angvel: np.ndarray       # (N, 3), body frame

    @property
    def duration(self):
        return float(self.times[-1])

    def __len__(self):
        return len(self.times)


def segment_duration_heuristic(spec, v_max, a_max):
    """Duration making the segment dynamically plausible.

    max(1.5 * dist / v_max, 2 * sqrt(dist / a_max), 0.5) for the straight-line
    distance between the boundary positions.
    """
    if v_max <= 0.0 or a_max <= 0.0:
        raise ValueError("v_max and a_max must be positive")
    dist = float(np.linalg.norm(spec.end_pos - spec.start_pos))
    return max(1.5 * dist / v_max, 2.0 * math.sqrt(dist / a_max), 0.5)


def _time_grid(duration, sample_rate):
    # Snap the duration up to a whole number of sample intervals so spacing
    # is exactly 1/sample_rate and the last sample lands on the segment end.
    dt = 1.0 / sample_rate
    n_int = max(1, math.ceil(duration * sample_rate - 1e-9))
    return np.arange(n_int + 1) * dt, n_int * dt


def default_kernel(duration, signal_variance=1.0, jitter=1e-10,
                   lengthscale_factor=LENGTHSCALE_FACTOR):
    """Kernel hyperparameters tied to the segment duration."""
    return KernelParams(signal_variance=signal_variance,
                        lengthscale=duration / lengthscale_factor,
                        jitter=jitter)


def _boundary_obs(T, orders):
    obs = []
    for order in orders:
        for t in (0.0, T):
            obs.append(GpObservation(t=t, order=order, value=0.0,
                                     noise_var=BOUNDARY_NOISE_VAR))
    return obs


def interpolate_segment(spec, params=None):
    """Densely sample the GP trajectory satisfying a segment spec.

    Parameters
    ----------
    spec : SegmentSpec
    params : KernelParams, optional
        Defaults to signal variance 1 and lengthscale duration/3.

    Returns
    -------
    TrajectorySegment

    Raises
    ------
    ValueError
        If the relative rotation angle reaches pi - 0.01.
    """
    times, T = _time_grid(spec.duration, spec.sample_rate)
    if params is None:
        params = default_kernel(T)

    # --- linear channels: GP on residuals about the endpoint chord ---------
    slope = (spec.end_pos - spec.start_pos) / T
    obs = _boundary_obs(T, (0, 1, 2))
    # residual observation values, one column per axis
    Y = np.vstack([
        np.zeros(3),                    # pos residual at 0
        np.zeros(3),                    # pos residual at T
        spec.start_vel - slope,
        spec.end_vel - slope,
        spec.start_acc,
        spec.end_acc,
    ])
    W = solve_observations(obs, Y, params)
    res_pos, res_vel, res_acc = posterior_means(obs, W, times, (0, 1, 2), params)
    pos = res_pos + spec.start_pos[None, :] + times[:, None] * slope[None, :]
    vel = res_vel + slope[None, :]
    acc = res_acc

    # --- angular channel: GP per rotation-vector chart component -----------
    phi_rel = so3_log(spec.start_rot.T @ spec.end_rot)
    angle = float(np.linalg.norm(phi_rel))
    if angle >= np.pi - ROTATION_MARGIN:
        raise ValueError(
            f"relative rotation angle {angle:.4f} rad too close to pi for the chart")
    w_slope = phi_rel / T
    obs_ang = _boundary_obs(T, (0, 1))
    Ya = np.vstack([
        np.zeros(3),
        np.zeros(3),
        spec.start_angvel - w_slope,
        spec.end_angvel - w_slope,
    ])
    Wa = solve_observations(obs_ang, Ya, params)
    res_phi, res_rate = posterior_means(obs_ang, Wa, times, (0, 1), params)
    phi = res_phi + times[:, None] * w_slope[None, :]
    angvel = res_rate + w_slope[None, :]
    rot = np.empty((len(times), 3, 3))
    for k in range(len(times)):
        rot[k] = spec.start_rot @ so3_exp(phi[k])

    return TrajectorySegment(times=times, pos=pos, vel=vel, acc=acc,
                             rot=rot, angvel=angvel)


def hold_segment(position, rotation, duration, sample_rate=20.0):
    """Constant-pose segment (zero velocity, acceleration, angular rate)."""
    spec = SegmentSpec(start_pos=position, end_pos=position,
                       start_rot=rotation, end_rot=rotation,
                       duration=duration, sample_rate=sample_rate)
    return interpolate_segment(spec)

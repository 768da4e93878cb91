"""Minimum-snap polynomial baseline for trajectory segments.

Linear channels: one degree-7 polynomial per axis minimizing the integral of
the squared fourth derivative, subject to position, velocity and acceleration
at both endpoints (jerk left free).  The equality-constrained quadratic
program is solved in closed form through its KKT system.

Orientation: a degree-5 minimum-acceleration polynomial per rotation-vector
chart component with position and rate boundary conditions, mirroring the GP
interpolator's chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rotations import so3_exp, so3_log
from .trajectory import ROTATION_MARGIN, SegmentSpec, TrajectorySegment, _time_grid


class MinSnapError(RuntimeError):
    """Constraint system singular (typically a degenerate duration)."""


def _cost_matrix(n_coeff, deriv, T):
    # Q[i, j] = integral over [0, T] of d^deriv(t^i)/dt^deriv * d^deriv(t^j)/dt^deriv
    Q = np.zeros((n_coeff, n_coeff))
    for i in range(deriv, n_coeff):
        ci = math.factorial(i) / math.factorial(i - deriv)
        for j in range(deriv, n_coeff):
            cj = math.factorial(j) / math.factorial(j - deriv)
            p = i + j - 2 * deriv + 1
            Q[i, j] = ci * cj * T ** p / p
    return Q


def _deriv_row(n_coeff, order, t):
    row = np.zeros(n_coeff)
    for j in range(order, n_coeff):
        row[j] = math.factorial(j) / math.factorial(j - order) * t ** (j - order)
    return row


def solve_min_derivative(boundary_start, boundary_end, T, degree, deriv):
    """Coefficients minimizing the squared ``deriv``-th derivative integral.

    ``boundary_start`` / ``boundary_end`` list the constrained derivative
    values at t=0 and t=T in increasing order (e.g. [pos, vel, acc]).
    Coefficients are for the monomial basis 1, t, ..., t^degree.
    """
    n = degree + 1
    k = len(boundary_start)
    if len(boundary_end) != k:
        raise ValueError("boundary lists must have equal length")
    A = np.vstack([_deriv_row(n, m, 0.0) for m in range(k)]
                  + [_deriv_row(n, m, T) for m in range(k)])
    b = np.concatenate([boundary_start, boundary_end])
    Q = _cost_matrix(n, deriv, T)
    # KKT system of: minimize c^T Q c  subject to  A c = b
    kkt = np.zeros((n + 2 * k, n + 2 * k))
    kkt[:n, :n] = 2.0 * Q
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    rhs = np.concatenate([np.zeros(n), b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as e:
        raise MinSnapError(f"singular constraint system (T={T:g}): {e}") from e
    if not np.all(np.isfinite(sol)):
        raise MinSnapError(f"constraint system ill-conditioned (T={T:g})")
    return sol[:n]


@dataclass
class PolySegment:
    """Per-axis polynomial coefficients (monomial basis) over one segment."""

    coeffs: np.ndarray   # (n_axes, degree + 1)
    duration: float

    def eval(self, times, order=0):
        """Evaluate the ``order``-th derivative at ``times``; shape (N, n_axes)."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        n = self.coeffs.shape[1]
        out = np.zeros((len(t), self.coeffs.shape[0]))
        for j in range(order, n):
            c = math.factorial(j) / math.factorial(j - order)
            out += np.outer(t ** (j - order), c * self.coeffs[:, j])
        return out


def snap_cost(seg, deriv=4):
    """Integral of the squared ``deriv``-th derivative, summed over axes."""
    Q = _cost_matrix(seg.coeffs.shape[1], deriv, seg.duration)
    return float(sum(c @ Q @ c for c in seg.coeffs))


def fit_min_snap(spec):
    """Degree-7 minimum-snap polynomials for the linear axes of a segment.

    Uses ``spec.duration`` as-is (no grid snapping; sampling snaps later).
    """
    coeffs = np.vstack([
        solve_min_derivative(
            [spec.start_pos[i], spec.start_vel[i], spec.start_acc[i]],
            [spec.end_pos[i], spec.end_vel[i], spec.end_acc[i]],
            spec.duration, degree=7, deriv=4)
        for i in range(3)
    ])
    return PolySegment(coeffs=coeffs, duration=spec.duration)


def sample_poly(seg, sample_rate, rot_poly=None, start_rot=None):
    """Sample a polynomial segment on the uniform grid format.

    The grid matches the GP interpolator: spacing exactly ``1/sample_rate``
    with the duration snapped up to a whole number of intervals.  Without an
    orientation polynomial the attitude is constant identity.
    """
    times, _ = _time_grid(seg.duration, sample_rate)
    pos = seg.eval(times, 0)
    vel = seg.eval(times, 1)
    acc = seg.eval(times, 2)
    n = len(times)
    if rot_poly is None:
        R0 = np.eye(3) if start_rot is None else np.asarray(start_rot, dtype=float)
        rot = np.broadcast_to(R0, (n, 3, 3)).copy()
        angvel = np.zeros((n, 3))
    else:
        phi = rot_poly.eval(times, 0)
        angvel = rot_poly.eval(times, 1)
        rot = np.empty((n, 3, 3))
        for k in range(n):
            rot[k] = start_rot @ so3_exp(phi[k])
    return TrajectorySegment(times=times, pos=pos, vel=vel, acc=acc,
                             rot=rot, angvel=angvel)


def interpolate_min_snap(spec):
    """Polynomial drop-in for the GP interpolator: same spec, same grid format.

    Linear channels are degree-7 minimum snap; the rotation-vector chart gets
    a degree-5 minimum-acceleration polynomial per component with the chart
    rates as boundary conditions.
    """
    _, T = _time_grid(spec.duration, spec.sample_rate)
    snapped = SegmentSpec(
        start_pos=spec.start_pos, end_pos=spec.end_pos,
        start_vel=spec.start_vel, end_vel=spec.end_vel,
        start_acc=spec.start_acc, end_acc=spec.end_acc,
        start_rot=spec.start_rot, end_rot=spec.end_rot,
        start_angvel=spec.start_angvel, end_angvel=spec.end_angvel,
        duration=T, sample_rate=spec.sample_rate)
    lin = fit_min_snap(snapped)
    phi_rel = so3_log(spec.start_rot.T @ spec.end_rot)
    if np.linalg.norm(phi_rel) >= np.pi - ROTATION_MARGIN:
        raise ValueError("relative rotation angle too close to pi for the chart")
    ang = PolySegment(coeffs=np.vstack([
        solve_min_derivative([0.0, spec.start_angvel[i]],
                             [phi_rel[i], spec.end_angvel[i]],
                             T, degree=5, deriv=2)
        for i in range(3)
    ]), duration=T)
    return sample_poly(lin, spec.sample_rate, rot_poly=ang, start_rot=spec.start_rot)

"""Scalar Gaussian-process regression over time with derivative observations.

The squared-exponential kernel

    k(t1, t2) = sv * exp(-(t1 - t2)^2 / (2 ell^2))

is closed under differentiation, so observations and predictions may carry a
derivative order: 0 (position), 1 (velocity) or 2 (acceleration).  Writing
u = (t1 - t2)/ell, each derivative in the first argument multiplies by
d/du * (1/ell) and each derivative in the second argument by d/du * (-1/ell),
which gives

    d^a/dt1^a d^b/dt2^b k = sv * (-1)^b * ell^-(a+b) * h_{a+b}(u) * exp(-u^2/2)

with the Hermite-type polynomials h_0..h_4 tabulated below.  All observation
channels are conditioned jointly: one Gram matrix over the mixed-order
observation set, one Cholesky factorization, and cross-covariance blocks per
requested output order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# Jitter escalation: multiply by 10 per retry, give up past this multiple of
# the signal variance.
_JITTER_CAP = 1e-4
_JITTER_FLOOR = 1e-12


class GramConditioningError(RuntimeError):
    """Gram matrix stayed non-positive-definite at the jitter cap."""


class DerivativeOrder(IntEnum):
    POSITION = 0
    VELOCITY = 1
    ACCELERATION = 2


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters.

    ``jitter`` is a dimensionless multiple of ``signal_variance`` added to the
    Gram diagonal.
    """

    signal_variance: float = 1.0
    lengthscale: float = 1.0
    jitter: float = 1e-10

    def __post_init__(self):
        if self.signal_variance <= 0.0:
            raise ValueError("signal_variance must be positive")
        if self.lengthscale <= 0.0:
            raise ValueError("lengthscale must be positive")
        if self.jitter < 0.0:
            raise ValueError("jitter must be non-negative")


@dataclass(frozen=True)
class GpObservation:
    """One scalar observation of the process or one of its derivatives."""

    t: float
    order: DerivativeOrder
    value: float
    noise_var: float = 0.0

    def __post_init__(self):
        if int(self.order) not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if self.noise_var < 0.0:
            raise ValueError("noise_var must be non-negative")
        if not (np.isfinite(self.t) and np.isfinite(self.value)):
            raise ValueError("t and value must be finite")


@dataclass
class GpPosterior:
    """Posterior means and covariances on a query grid, per output order."""

    query_times: np.ndarray
    mean_pos: np.ndarray
    mean_vel: np.ndarray
    mean_acc: np.ndarray
    cov_pos: np.ndarray
    cov_vel: np.ndarray
    cov_acc: np.ndarray

    def mean(self, order):
        return (self.mean_pos, self.mean_vel, self.mean_acc)[int(order)]

    def cov(self, order):
        return (self.cov_pos, self.cov_vel, self.cov_acc)[int(order)]


def _poly(n, u):
    # n-th derivative of exp(-u^2/2) equals h_n(u) * exp(-u^2/2)
    if n == 0:
        return np.ones_like(u)
    if n == 1:
        return -u
    if n == 2:
        return u * u - 1.0
    if n == 3:
        return u * (3.0 - u * u)
    if n == 4:
        return 3.0 - u * u * (6.0 - u * u)
    raise ValueError("derivative order out of range")


def kernel_matrix(t_left, t_right, orders_left, orders_right, params):
    """Cross-covariance block between two mixed-order point sets.

    Entry (i, j) is the kernel differentiated ``orders_left[i]`` times in its
    first argument and ``orders_right[j]`` times in its second, evaluated at
    ``(t_left[i], t_right[j])``.
    """
    t_left = np.atleast_1d(np.asarray(t_left, dtype=float))
    t_right = np.atleast_1d(np.asarray(t_right, dtype=float))
    a = np.atleast_1d(np.asarray(orders_left, dtype=int))
    b = np.atleast_1d(np.asarray(orders_right, dtype=int))
    ell = params.lengthscale
    u = (t_left[:, None] - t_right[None, :]) / ell
    base = params.signal_variance * np.exp(-0.5 * u * u)
    out = np.empty_like(base)
    for n in range(int(a.max(initial=0) + b.max(initial=0)) + 1):
        mask = (a[:, None] + b[None, :]) == n
        if mask.any():
            out[mask] = (_poly(n, u)[mask] * ell ** (-n))
    out *= np.where(b[None, :] % 2 == 1, -1.0, 1.0)
    return out * base


def se_kernel(t1, t2, params, order_left=0, order_right=0):
    """Squared-exponential kernel value with derivative orders per argument."""
    return float(kernel_matrix([t1], [t2], [int(order_left)], [int(order_right)],
                               params)[0, 0])


def build_gram(observations, params):
    """Gram matrix of an observation set, including noise and jitter.

    The diagonal gets ``noise_var_i + jitter * signal_variance``.  Requires at
    least one observation.
    """
    if len(observations) == 0:
        raise ValueError("build_gram needs at least one observation")
    t = np.array([o.t for o in observations])
    orders = np.array([int(o.order) for o in observations])
    noise = np.array([o.noise_var for o in observations])
    K = kernel_matrix(t, t, orders, orders, params)
    K[np.diag_indices_from(K)] += noise + params.jitter * params.signal_variance
    return K


def _factor(K, params):
    """Cholesky with jitter escalation (x10 per retry, cap 1e-4*sv)."""
    try:
        return cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        pass
    extra = max(params.jitter, _JITTER_FLOOR)
    while True:
        extra *= 10.0
        if extra > _JITTER_CAP:
            raise GramConditioningError(
                f"Gram matrix not positive definite at jitter cap {_JITTER_CAP:g}")
        try:
            return cho_factor(K + extra * params.signal_variance * np.eye(len(K)),
                              lower=True)
        except np.linalg.LinAlgError:
            continue


def solve_observations(observations, values, params):
    """Cholesky solve of the observation Gram against ``values``.

    ``values`` may be a vector or a matrix of stacked right-hand sides (one
    column per output channel sharing the same observation structure).
    Returns the weight array with the same trailing shape.
    """
    K = build_gram(observations, params)
    factor = _factor(K, params)
    return cho_solve(factor, np.asarray(values, dtype=float))


def posterior_means(observations, weights, query_times, out_orders, params):
    """Posterior means at query times for each requested output order.

    ``weights`` comes from :func:`solve_observations`.  Mean-only fast path:
    no query-query covariance is formed, so dense grids stay cheap.
    """
    t = np.array([o.t for o in observations])
    orders = np.array([int(o.order) for o in observations])
    q = np.atleast_1d(np.asarray(query_times, dtype=float))
    out = []
    for o in out_orders:
        Ks = kernel_matrix(q, t, np.full(q.shape, int(o)), orders, params)
        out.append(Ks @ weights)
    return out


def gp_infer(observations, query_times, params):
    """Joint GP posterior over position, velocity and acceleration.

    All observations (any mix of derivative orders) condition a single Gram
    matrix; each output order uses its own cross-covariance block against the
    same factorization.  With no observations the prior is returned: zero
    means, prior covariance blocks.

    Returns
    -------
    GpPosterior
    """
    q = np.atleast_1d(np.asarray(query_times, dtype=float))
    q_orders = {o: np.full(q.shape, int(o)) for o in (0, 1, 2)}
    priors = [kernel_matrix(q, q, q_orders[o], q_orders[o], params) for o in (0, 1, 2)]
    if len(observations) == 0:
        zero = np.zeros_like(q)
        return GpPosterior(q, zero, zero.copy(), zero.copy(), *priors)

    t = np.array([o.t for o in observations])
    orders = np.array([int(o.order) for o in observations])
    y = np.array([o.value for o in observations])
    K = build_gram(observations, params)
    factor = _factor(K, params)
    alpha = cho_solve(factor, y)

    means, covs = [], []
    for o in (0, 1, 2):
        Ks = kernel_matrix(q, t, q_orders[o], orders, params)
        means.append(Ks @ alpha)
        C = priors[o] - Ks @ cho_solve(factor, Ks.T)
        covs.append(0.5 * (C + C.T))
    return GpPosterior(q, means[0], means[1], means[2], covs[0], covs[1], covs[2])

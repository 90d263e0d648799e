"""Kalman filtering for the Gaussian random walk and covariance utilities.

The univariate Kalman filter is the exact reference against which the
particle filter is validated. The covariance helpers build the shrunk
reference covariance and Mahalanobis distances for multivariate tracking.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import DomainError


@dataclass(frozen=True)
class KalmanState:
    """Filtering distribution N(mean, variance) for a scalar random walk.

    ``state_var`` is the random-walk innovation variance, ``obs_var`` the
    measurement variance.
    """

    mean: float
    variance: float
    state_var: float
    obs_var: float

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError("Kalman variance must stay positive")
        if self.state_var < 0 or not self.obs_var > 0:
            raise DomainError("need state_var >= 0 and obs_var > 0")

    @property
    def sd(self):
        return float(np.sqrt(self.variance))


def kalman_init(mean, variance, state_var, obs_var):
    return KalmanState(float(mean), float(variance), float(state_var), float(obs_var))


def kalman_step(state, y):
    """Predict one random-walk step, then condition on ``y``."""
    pred = state.variance + state.state_var
    gain = pred / (pred + state.obs_var)
    mean = state.mean + gain * (y - state.mean)
    return KalmanState(mean, (1.0 - gain) * pred, state.state_var, state.obs_var)


def kalman_filter(y, mean0, var0, state_var, obs_var):
    """Filtering means and variances for a whole sequence (vectorised over leading axes).

    ``y`` may have shape ``(T,)`` or ``(B, T)``; variances do not depend on
    the data, so only the means carry the batch axis.
    """
    y = np.asarray(y, dtype=float)
    T = y.shape[-1]
    means = np.empty(y.shape)
    variances = np.empty(T)
    m = np.full(y.shape[:-1], float(mean0))
    v = float(var0)
    for t in range(T):
        pred = v + state_var
        gain = pred / (pred + obs_var)
        m = m + gain * (y[..., t] - m)
        v = (1.0 - gain) * pred
        means[..., t] = m
        variances[t] = v
    return means, variances


def normal_cdf(x):
    """Standard normal CDF (Cephes ``ndtr``; accurate to ~1e-16 absolute)."""
    return ndtr(x)


def kalman_region_prob(state, lower, upper):
    """P(lower <= theta <= upper) under N(state.mean, state.variance)."""
    return interval_prob(state.mean, state.sd, lower, upper)


def interval_prob(mean, sd, lower, upper):
    if lower > upper:
        raise DomainError(f"empty interval [{lower}, {upper}]")
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    p = normal_cdf((upper - mean) / sd) - normal_cdf((lower - mean) / sd)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class CovarianceModel:
    raw: np.ndarray
    shrunk: np.ndarray
    rho: float
    inverse: np.ndarray
    chol: np.ndarray

    @property
    def condition_raw(self):
        return condition_number(self.raw)

    @property
    def condition_shrunk(self):
        return condition_number(self.shrunk)


def condition_number(a):
    """Ratio of the largest to smallest eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(np.asarray(a, dtype=float))
    if w[0] <= 0:
        return np.inf
    return float(w[-1] / w[0])


def shrink_covariance(raw, rho):
    """Shrink towards the diagonal: ``(1 - rho) * raw + rho * diag(diag(raw))``."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise DomainError("covariance must be a square matrix")
    if not np.allclose(raw, raw.T, rtol=0, atol=1e-12 * max(1.0, np.abs(raw).max())):
        raise DomainError("covariance must be symmetric")
    if np.any(np.diag(raw) <= 0):
        raise DomainError("covariance diagonal must be positive")
    if not 0 <= rho <= 1:
        raise DomainError("rho must lie in [0, 1]")
    shrunk = (1.0 - rho) * raw + rho * np.diag(np.diag(raw))
    shrunk = 0.5 * (shrunk + shrunk.T)
    try:
        chol = np.linalg.cholesky(shrunk)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(shrunk)
        raise DomainError(f"shrunk covariance is not positive definite "
                          f"(smallest eigenvalue {w[0]:.3g}, rho={rho})") from exc
    inverse = np.linalg.inv(shrunk)
    return CovarianceModel(raw, shrunk, float(rho), 0.5 * (inverse + inverse.T), chol)


def mahalanobis_sq(x, center, inverse):
    """Squared Mahalanobis distance of each row of ``x`` from ``center``."""
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    inverse = np.asarray(inverse, dtype=float)
    if x.shape[-1] != center.shape[-1] or inverse.shape != (center.size, center.size):
        raise DomainError("dimension mismatch between point, center and matrix")
    diff = x - center
    out = np.einsum("...i,ij,...j->...", diff, inverse, diff)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out

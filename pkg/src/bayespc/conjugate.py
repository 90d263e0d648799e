"""Conjugate priors, Phase I updates and log-scale predictive densities.

Densities are only ever returned on the log scale; callers combine them with
log-sum-exp. Exponential observations are parameterised by their *rate*.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .exceptions import DomainError

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GammaShapeRate:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(f"Gamma needs shape > 0 and rate > 0, got {self}")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def sd(self):
        return np.sqrt(self.shape) / self.rate


@dataclass(frozen=True)
class BetaAB:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"Beta needs a > 0 and b > 0, got {self}")

    @property
    def mean(self):
        return self.a / (self.a + self.b)

    @property
    def sd(self):
        n = self.a + self.b
        return np.sqrt(self.a * self.b / (n * n * (n + 1.0)))


@dataclass(frozen=True)
class GaussianMeanVar:
    """Normal distribution; ``variance == 0`` is allowed and means a point mass."""

    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise DomainError(f"variance must be non-negative, got {self.variance}")


@dataclass(frozen=True)
class Exponential:
    rate: float


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float


@dataclass
class SegmentStats:
    """Sufficient statistics of the observations in one segment."""

    count: int = 0
    sum: float = 0.0
    trials: int = 0

    def updated(self, y, batch_size=0):
        return SegmentStats(self.count + 1, self.sum + y, self.trials + batch_size)


@dataclass(frozen=True)
class InControlReference:
    """Fixed in-control reference: a known parameter or a Phase I posterior.

    ``kind`` is ``"point"`` (``value`` holds the parameter) or ``"posterior"``
    (``value`` holds a conjugate distribution).
    """

    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in ("point", "posterior"):
            raise DomainError(f"unknown reference kind {self.kind!r}")

    @classmethod
    def point(cls, theta):
        return cls("point", theta)

    @classmethod
    def posterior(cls, dist):
        return cls("posterior", dist)


def gamma_from_mean_sd(mu, sigma):
    """Gamma(shape, rate) with mean ``mu`` and standard deviation ``sigma``."""
    if not (mu > 0 and sigma > 0):
        raise DomainError("mean and sd must both be positive")
    var = sigma * sigma
    return GammaShapeRate(mu * mu / var, mu / var)


def beta_from_mean_sd(mu, sigma):
    """Beta(a, b) with mean ``mu`` and standard deviation ``sigma`` (method of moments)."""
    if not (0 < mu < 1 and sigma > 0):
        raise DomainError("Beta mean must lie in (0, 1) and sd must be positive")
    k = mu * (1.0 - mu) / (sigma * sigma) - 1.0
    if k <= 0:
        raise DomainError(f"sd {sigma} too large for a Beta with mean {mu}")
    return BetaAB(mu * k, (1.0 - mu) * k)


def gamma_phase1_update(prior, phase1):
    x = np.asarray(phase1, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Exponential observations must be positive")
    return GammaShapeRate(prior.shape + x.size, prior.rate + float(x.sum()))


def beta_phase1_update(prior, phase1_counts, batch_size):
    x = np.asarray(phase1_counts)
    if x.size and (np.any(x < 0) or np.any(x > batch_size) or np.any(x != np.round(x))):
        raise DomainError(f"counts must be integers in [0, {batch_size}]")
    total = float(x.sum())
    return BetaAB(prior.a + total, prior.b + x.size * batch_size - total)


def log_pred_exponential_gamma(post, y):
    """Log Lomax density: Exponential likelihood integrated against Gamma(shape, rate)."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("Exponential observations must be positive")
    out = _lomax(post.shape, post.rate, y)
    return float(out) if out.ndim == 0 else out


def _lomax(shape, rate, y):
    # log(shape) + shape*log(rate) - (shape+1)*log(rate+y), rearranged to avoid cancellation
    return np.log(shape) - np.log(rate + y) - shape * np.log1p(y / rate)


def log_pred_binomial_beta(post, y, batch_size):
    """Log Beta-Binomial pmf of ``y`` defects in ``batch_size`` trials."""
    y = np.asarray(y, dtype=float)
    _check_counts(y, batch_size)
    out = _beta_binomial(post.a, post.b, y, batch_size)
    return float(out) if out.ndim == 0 else out


def _log_choose(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _beta_binomial(a, b, y, n):
    return _log_choose(n, y) + betaln(y + a, n - y + b) - betaln(a, b)


def _check_counts(y, batch_size):
    if np.any(y < 0) or np.any(y > batch_size) or np.any(y != np.round(y)):
        raise DomainError(f"counts must be integers in [0, {batch_size}]")


def log_pred_gaussian(ref, obs_var, y):
    """Log density of ``y`` under N(ref.mean, ref.variance + obs_var)."""
    if not obs_var > 0:
        raise DomainError("observation variance must be positive")
    var = ref.variance + obs_var
    y = np.asarray(y, dtype=float)
    out = -0.5 * (_LOG_2PI + np.log(var) + (y - ref.mean) ** 2 / var)
    return float(out) if out.ndim == 0 else out


def log_lik_exponential(rate, y):
    y = np.asarray(y, dtype=float)
    return np.log(rate) - rate * y


def log_lik_binomial(p, y, n):
    y = np.asarray(y, dtype=float)
    return _log_choose(n, y) + y * np.log(p) + (n - y) * np.log1p(-p)


def sample(dist, count, rng):
    """Draw ``count`` variates from ``dist`` using generator ``rng``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if isinstance(dist, GammaShapeRate):
        return rng.gamma(dist.shape, 1.0 / dist.rate, size=count)
    if isinstance(dist, BetaAB):
        return rng.beta(dist.a, dist.b, size=count)
    if isinstance(dist, GaussianMeanVar):
        return rng.normal(dist.mean, np.sqrt(dist.variance), size=count)
    if isinstance(dist, Exponential):
        return rng.exponential(1.0 / dist.rate, size=count)
    if isinstance(dist, Binomial):
        return rng.binomial(dist.n, dist.p, size=count)
    raise TypeError(f"cannot sample from {type(dist).__name__}")


class ExponentialGamma:
    """Exponential time-between-events model with Gamma priors on the rate."""

    name = "exponential-gamma"

    def __init__(self, reference, ooc_prior):
        self.reference = reference
        self.ooc_prior = ooc_prior

    def check(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)):
            raise DomainError("time-between-events observations must be positive")
        return y

    def log_pred_ic(self, y):
        ref = self.reference
        if ref.kind == "point":
            return log_lik_exponential(ref.value, y)
        return _lomax(ref.value.shape, ref.value.rate, y)

    def log_pred_ooc(self, count, total, y):
        return _lomax(self.ooc_prior.shape + count, self.ooc_prior.rate + total, y)


class BinomialBeta:
    """Defect counts in batches of ``batch_size`` with Beta priors on the proportion."""

    name = "binomial-beta"

    def __init__(self, reference, ooc_prior, batch_size):
        self.reference = reference
        self.ooc_prior = ooc_prior
        self.batch_size = int(batch_size)

    def check(self, y):
        y = np.asarray(y, dtype=float)
        _check_counts(y, self.batch_size)
        return y

    def log_pred_ic(self, y):
        ref = self.reference
        if ref.kind == "point":
            return log_lik_binomial(ref.value, y, self.batch_size)
        return _beta_binomial(ref.value.a, ref.value.b, y, self.batch_size)

    def log_pred_ooc(self, count, total, y):
        a = self.ooc_prior.a + total
        b = self.ooc_prior.b + count * self.batch_size - total
        return _beta_binomial(a, b, y, self.batch_size)


class GaussianKnownVar:
    """Gaussian observations with known variance and a Normal prior on the mean."""

    name = "gaussian"

    def __init__(self, reference, ooc_prior, obs_var):
        if not obs_var > 0:
            raise DomainError("observation variance must be positive")
        self.reference = reference
        self.ooc_prior = ooc_prior
        self.obs_var = float(obs_var)

    def check(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("Gaussian observations must be finite")
        return y

    def log_pred_ic(self, y):
        ref = self.reference
        dist = GaussianMeanVar(ref.value, 0.0) if ref.kind == "point" else ref.value
        return log_pred_gaussian(dist, self.obs_var, y)

    def log_pred_ooc(self, count, total, y):
        prior = self.ooc_prior
        if prior.variance == 0:
            mean = np.full(np.shape(count), prior.mean, dtype=float)
            var = np.zeros(np.shape(count))
        else:
            prec = 1.0 / prior.variance + count / self.obs_var
            mean = (prior.mean / prior.variance + total / self.obs_var) / prec
            var = 1.0 / prec
        pv = var + self.obs_var
        return -0.5 * (_LOG_2PI + np.log(pv) + (y - mean) ** 2 / pv)

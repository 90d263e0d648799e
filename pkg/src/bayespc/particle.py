"""Bootstrap particle filtering of P(theta_t in A | y_1..y_t).

Particles are stored as arrays: shape ``(P,)`` for scalar states and
``(P, d)`` for vector states. Weights are kept on the log scale and
normalised after every observation. The acceptable-region estimate is taken
from the weighted ensemble *before* any resampling.
"""
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logit, logsumexp

from .conjugate import BetaAB
from .exceptions import DegeneracyError, DomainError
from .gaussian import mahalanobis_sq

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class AcceptableRegion:
    """Region of acceptable parameter values.

    ``kind`` is one of ``interval``, ``half-line``, ``box``, ``ellipsoid``,
    plus the degenerate ``all`` and ``none``. Half-lines use ``-inf`` or
    ``inf`` for the open end.
    """

    kind: str
    dim: int
    lower: np.ndarray = None
    upper: np.ndarray = None
    center: np.ndarray = None
    inverse: np.ndarray = None
    radius: float = None

    @classmethod
    def interval(cls, lower, upper):
        if lower > upper:
            raise DomainError(f"empty interval [{lower}, {upper}]")
        return cls("interval", 1, np.array([float(lower)]), np.array([float(upper)]))

    @classmethod
    def below(cls, upper):
        return cls("half-line", 1, np.array([-np.inf]), np.array([float(upper)]))

    @classmethod
    def above(cls, lower):
        return cls("half-line", 1, np.array([float(lower)]), np.array([np.inf]))

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise DomainError("box needs matching bounds with lower <= upper")
        return cls("box", lower.size, lower, upper)

    @classmethod
    def ellipsoid(cls, center, inverse, radius):
        center = np.asarray(center, dtype=float)
        inverse = np.asarray(inverse, dtype=float)
        if inverse.shape != (center.size, center.size):
            raise DomainError("ellipsoid matrix does not match the center")
        if not np.allclose(inverse, inverse.T):
            raise DomainError("ellipsoid matrix must be symmetric")
        try:
            np.linalg.cholesky(inverse)
        except np.linalg.LinAlgError as exc:
            raise DomainError("ellipsoid matrix must be positive definite") from exc
        return cls("ellipsoid", center.size, center=center, inverse=inverse, radius=float(radius))

    @classmethod
    def everything(cls, dim=1):
        return cls("all", dim)

    @classmethod
    def nothing(cls, dim=1):
        return cls("none", dim)


def region_contains(region, state):
    """Membership of one state or of every row of a particle array."""
    x = np.asarray(state, dtype=float)
    if region.dim == 1:
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        elif x.ndim > 1:
            raise DomainError(f"expected scalar states, got shape {x.shape}")
    elif x.shape[-1:] != (region.dim,):
        raise DomainError(f"expected states of dimension {region.dim}, got shape {x.shape}")
    shape = x.shape if region.dim == 1 else x.shape[:-1]
    if region.kind == "all":
        out = np.ones(shape, dtype=bool)
    elif region.kind == "none":
        out = np.zeros(shape, dtype=bool)
    elif region.kind == "ellipsoid":
        out = np.asarray(mahalanobis_sq(x, region.center, region.inverse) <= region.radius)
    elif region.dim == 1:
        out = (x >= region.lower[0]) & (x <= region.upper[0])
    else:
        out = np.all((x >= region.lower) & (x <= region.upper), axis=-1)
    return bool(out) if out.ndim == 0 else out


@dataclass
class StateSpaceModel:
    """Vectorised state-space model.

    ``init(rng, P)`` draws initial particles, ``transition(particles, rng)``
    propagates them, and ``log_obs(particles, y)`` returns the observation
    log-likelihood of ``y`` for every particle.
    """

    dimension: int
    init: Callable
    transition: Callable
    log_obs: Callable
    params: dict = field(default_factory=dict)


def gaussian_random_walk(state_sd, obs_sd, init_mean=0.0, init_sd=1.0):
    """theta_t = theta_{t-1} + N(0, state_sd^2); y_t = theta_t + N(0, obs_sd^2)."""
    obs_var = obs_sd * obs_sd

    def log_obs(x, y):
        return -0.5 * (_LOG_2PI + np.log(obs_var) + (y - x) ** 2 / obs_var)

    return StateSpaceModel(
        1,
        lambda rng, P: rng.normal(init_mean, init_sd, size=P),
        lambda x, rng: x + rng.normal(0.0, state_sd, size=x.shape),
        log_obs,
        dict(state_sd=state_sd, obs_sd=obs_sd, init_mean=init_mean, init_sd=init_sd),
    )


def drift_jump(jump_prob, jump, state_sd, obs_sd, init_mean=0.0, init_sd=1.0):
    """Gaussian random walk that also jumps by ``jump`` with probability ``jump_prob``."""
    base = gaussian_random_walk(state_sd, obs_sd, init_mean, init_sd)

    def transition(x, rng):
        jumps = rng.random(x.shape) < jump_prob
        return x + jump * jumps + rng.normal(0.0, state_sd, size=x.shape)

    params = dict(base.params, jump_prob=jump_prob, jump=jump)
    return StateSpaceModel(1, base.init, transition, base.log_obs, params)


def binomial_logit_walk(state_sd, batch_size, init):
    """Logit-scale random walk for a defect proportion observed as Binomial counts.

    ``init`` is a ``BetaAB`` on the proportion (particles are its draws mapped
    to the logit scale) or a callable ``(rng, P) -> logit particles``.
    """
    n = int(batch_size)

    if isinstance(init, BetaAB):
        prior = init

        def init(rng, P):
            return logit(rng.beta(prior.a, prior.b, size=P))

    def log_obs(z, y):
        # y*log(p) + (n-y)*log(1-p) with p = expit(z), written to stay finite for any z
        if not 0 <= y <= n:
            return np.full(np.shape(z), -np.inf)
        return -y * np.logaddexp(0.0, -z) - (n - y) * np.logaddexp(0.0, z)

    return StateSpaceModel(
        1,
        init,
        lambda z, rng: z + rng.normal(0.0, state_sd, size=z.shape),
        log_obs,
        dict(state_sd=state_sd, batch_size=n),
    )


def multivariate_gaussian_walk(obs_cov, state_cov, init_mean, init_cov):
    """Vector random walk with Gaussian observations; square roots are factored once."""
    obs_cov = np.asarray(obs_cov, dtype=float)
    d = obs_cov.shape[0]
    obs_chol = np.linalg.cholesky(obs_cov)
    state_chol = np.linalg.cholesky(np.asarray(state_cov, dtype=float))
    init_chol = np.linalg.cholesky(np.asarray(init_cov, dtype=float))
    init_mean = np.asarray(init_mean, dtype=float)
    log_det = 2.0 * np.log(np.diag(obs_chol)).sum()

    def log_obs(x, y):
        z = solve_triangular(obs_chol, (y - x).T, lower=True)
        return -0.5 * (d * _LOG_2PI + log_det + np.einsum("ij,ij->j", z, z))

    return StateSpaceModel(
        d,
        lambda rng, P: init_mean + rng.standard_normal((P, d)) @ init_chol.T,
        lambda x, rng: x + rng.standard_normal(x.shape) @ state_chol.T,
        log_obs,
        dict(obs_cov=obs_cov, state_cov=state_cov),
    )


def ess(log_weights):
    """Effective sample size ``1 / sum(w_i^2)`` of normalised log-weights."""
    return float(1.0 / np.exp(2.0 * np.asarray(log_weights)).sum())


def systematic_resample(weights, rng):
    """Systematic resampling: one uniform offset, ``P`` evenly spaced points."""
    w = np.asarray(weights, dtype=float)
    P = w.size
    cum = np.cumsum(w)
    cum /= cum[-1]
    positions = (rng.random() + np.arange(P)) / P
    return np.minimum(np.searchsorted(cum, positions, side="right"), P - 1)


class StepDiagnostics(NamedTuple):
    ess: float
    resampled: bool
    mean: object


@dataclass
class ParticleEnsemble:
    model: StateSpaceModel
    particles: np.ndarray
    log_weights: np.ndarray
    rng: np.random.Generator
    resample_threshold: float = 0.5
    resample_count: int = 0
    step_count: int = 0
    ess_total: float = 0.0

    @property
    def size(self):
        return self.log_weights.size

    @property
    def ess(self):
        return ess(self.log_weights)

    @property
    def mean_ess(self):
        return self.ess_total / self.step_count if self.step_count else float(self.size)

    @property
    def resample_fraction(self):
        return self.resample_count / self.step_count if self.step_count else 0.0


def pf_init(model, particle_count, resample_threshold=0.5, rng=None):
    if particle_count < 2:
        raise DomainError("need at least two particles")
    if not 0 < resample_threshold <= 1:
        raise DomainError("resample_threshold must lie in (0, 1]")
    if rng is None:
        raise ValueError("an explicit random generator is required")
    particles = np.asarray(model.init(rng, particle_count), dtype=float)
    log_w = np.full(particle_count, -np.log(particle_count))
    return ParticleEnsemble(model, particles, log_w, rng, resample_threshold)


def pf_step(ens, y, region):
    """Propagate, reweight by ``y`` and estimate ``P(theta_t in A)``.

    Returns ``(ens, p_A, diagnostics)``; the ensemble is updated in place.
    """
    x = ens.model.transition(ens.particles, ens.rng)
    lw = ens.log_weights + ens.model.log_obs(x, y)
    norm = logsumexp(lw)
    if not np.isfinite(norm):
        raise DegeneracyError(f"observation {y!r} has zero likelihood under every particle")
    lw = lw - norm
    w = np.exp(lw)
    inside = region_contains(region, x)
    p_a = float(np.clip(w[inside].sum() / w.sum(), 0.0, 1.0))
    mean = w @ x
    n_eff = float(1.0 / np.dot(w, w))
    resampled = n_eff < ens.resample_threshold * w.size
    if resampled:
        idx = systematic_resample(w, ens.rng)
        x = x[idx]
        lw = np.full(w.size, -np.log(w.size))
        ens.resample_count += 1
    ens.particles = x
    ens.log_weights = lw
    ens.step_count += 1
    ens.ess_total += n_eff
    return ens, p_a, StepDiagnostics(n_eff, resampled, mean)


class TrackingRun(NamedTuple):
    p: np.ndarray
    ess: np.ndarray
    resampled: np.ndarray
    means: np.ndarray


def run_tracking(model, region, observations, particle_count, rng, resample_threshold=0.5):
    """Run a bootstrap filter over a sequence and collect the monitoring path."""
    ens = pf_init(model, particle_count, resample_threshold, rng)
    T = len(observations)
    p = np.empty(T)
    n_eff = np.empty(T)
    flags = np.zeros(T, dtype=bool)
    means = []
    for t, y in enumerate(observations):
        ens, p[t], diag = pf_step(ens, y, region)
        n_eff[t] = diag.ess
        flags[t] = diag.resampled
        means.append(diag.mean)
    return TrackingRun(p, n_eff, flags, np.asarray(means))


@dataclass
class RegimeParticles:
    """Particle approximation to the recoverable-regime posterior.

    Each particle carries the start of its current segment ``r``, its regime
    ``s`` and the sufficient statistics of an out-of-control segment.
    """

    config: object
    r: np.ndarray
    s: np.ndarray
    count: np.ndarray
    total: np.ndarray
    log_weights: np.ndarray
    rng: np.random.Generator
    resample_threshold: float = 0.5
    t: int = 0
    resample_count: int = 0


def pf_recoverable_init(config, particle_count, rng, resample_threshold=0.5):
    if particle_count < 2:
        raise DomainError("need at least two particles")
    P = particle_count
    return RegimeParticles(config, np.zeros(P, dtype=np.int64), np.zeros(P, dtype=np.int8),
                           np.zeros(P), np.zeros(P), np.full(P, -np.log(P)), rng,
                           resample_threshold)


def pf_recoverable_step(ens, y):
    """Propose regime moves from the duration hazards and weight by the predictive.

    Returns ``(ens, p_ic_hat)``.
    """
    cfg = ens.config
    model = cfg.model
    y = float(model.check(y))
    if ens.t == 0:
        ens.t = 1
        return ens, 1.0

    t = ens.t
    d = t - ens.r
    ooc = ens.s == 1
    h = np.where(ooc, cfg.dur_ooc.hazard(d), cfg.dur_ic.hazard(d))
    if cfg.absorbing_ooc:
        h = np.where(ooc, 0.0, h)
    switch = ens.rng.random(h.size) < h
    s = np.where(switch, 1 - ens.s, ens.s).astype(np.int8)
    r = np.where(switch, t, ens.r)
    count = np.where(switch, 0.0, ens.count)
    total = np.where(switch, 0.0, ens.total)

    ooc = s == 1
    log_pred = np.full(s.size, float(model.log_pred_ic(y)))
    if ooc.any():
        log_pred[ooc] = model.log_pred_ooc(count[ooc], total[ooc], y)
    count = count + ooc
    total = total + np.where(ooc, y, 0.0)

    lw = ens.log_weights + log_pred
    norm = logsumexp(lw)
    if not np.isfinite(norm):
        raise DegeneracyError(f"observation {y!r} has zero predictive density under every particle")
    lw -= norm
    w = np.exp(lw)
    p_ic = float(np.clip(w[~ooc].sum() / w.sum(), 0.0, 1.0))
    if 1.0 / np.dot(w, w) < ens.resample_threshold * w.size:
        idx = systematic_resample(w, ens.rng)
        r, s, count, total = r[idx], s[idx], count[idx], total[idx]
        lw = np.full(w.size, -np.log(w.size))
        ens.resample_count += 1
    ens.r, ens.s, ens.count, ens.total, ens.log_weights = r, s, count, total, lw
    ens.t = t + 1
    return ens, p_ic

"""Exact filtering for processes that leave and return to an in-control regime.

The posterior is kept over pairs ``(r, s)``: the current segment began with
observation ``r + 1`` and is in regime ``s`` (0 = in control, 1 = out of
control). The monitoring statistic is ``p_ic = P(s_t = 0 | y_1..y_t)``.

Setting ``absorbing_ooc=True`` gives the classical single-change model: an
out-of-control segment never ends, so ``p_ic`` is the posterior probability
that no change has happened yet.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .conjugate import SegmentStats
from .exceptions import DomainError, NumericalFailure


class DurationPrior:
    """Segment-length prior, exposed through its hazard ``h(d)``.

    ``h(d)`` is the prior probability that a segment which has lasted ``d``
    observations ends after the current one. Custom tables are extended by
    their last entry for ``d`` beyond the table length.
    """

    def __init__(self, family, p=None, hazards=None):
        if family == "geometric":
            if p is None or not 0 < p <= 1:
                raise DomainError(f"geometric success probability must lie in (0, 1], got {p}")
            self.p = float(p)
            self.hazards = None
        elif family == "custom-hazard":
            h = np.asarray(hazards, dtype=float)
            if h.ndim != 1 or h.size == 0 or np.any((h < 0) | (h > 1)):
                raise DomainError("hazard table must be a non-empty vector of values in [0, 1]")
            self.p = None
            self.hazards = h
        else:
            raise DomainError(f"unknown duration family {family!r}")
        self.family = family

    @classmethod
    def geometric(cls, p):
        return cls("geometric", p=p)

    @classmethod
    def geometric_mean(cls, mean):
        """Geometric durations with the given mean length (``p = 1 / mean``)."""
        if not mean >= 1:
            raise DomainError("mean duration must be at least 1")
        return cls("geometric", p=1.0 / mean)

    @classmethod
    def from_hazards(cls, hazards):
        return cls("custom-hazard", hazards=hazards)

    @classmethod
    def from_pmf(cls, pmf):
        """Hazards ``g(d) / (1 - G(d-1))`` of a duration pmf on ``{1, 2, ...}``."""
        g = np.asarray(pmf, dtype=float)
        surv = 1.0 - np.concatenate([[0.0], np.cumsum(g)[:-1]])
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(surv > 0, g / np.where(surv > 0, surv, 1.0), 1.0)
        return cls.from_hazards(np.clip(h, 0.0, 1.0))

    @classmethod
    def never(cls):
        """Segments that never end (``h = 0``)."""
        return cls.from_hazards([0.0])

    def hazard(self, d):
        d = np.asarray(d)
        if self.family == "geometric":
            return np.full(d.shape, self.p)
        idx = np.minimum(d, self.hazards.size) - 1
        return self.hazards[idx]

    def log_hazards(self, d):
        """Return ``(log h(d), log(1 - h(d)))`` for an array of durations."""
        h = self.hazard(d)
        with np.errstate(divide="ignore"):
            return np.log(h), np.log1p(-h)

    def __repr__(self):
        if self.family == "geometric":
            return f"DurationPrior.geometric({self.p!r})"
        return f"DurationPrior.from_hazards({self.hazards.tolist()!r})"


@dataclass
class FilterConfig:
    model: object
    dur_ic: DurationPrior
    dur_ooc: DurationPrior
    delta: float = 0.5
    prune_eps: float = 0.0
    absorbing_ooc: bool = False

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 <= self.prune_eps <= 0.01:
            raise DomainError(f"prune_eps must lie in [0, 0.01], got {self.prune_eps}")


class RegimeState(NamedTuple):
    changepoint: int
    regime: int
    log_mass: float
    stats: SegmentStats


class MonitorRecord(NamedTuple):
    t: int
    p_ic: float
    signaled: bool
    map_changepoint: tuple
    n_states: int


@dataclass
class FilterState:
    config: FilterConfig
    t: int = 0
    r: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    s: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    log_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    count: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def p_ic(self):
        if self.t == 0:
            return 1.0
        return float(min(1.0, np.exp(self.log_mass[self.s == 0]).sum()))

    @property
    def states(self):
        batch = getattr(self.config.model, "batch_size", 0)
        return [
            RegimeState(int(r), int(s), float(m),
                        SegmentStats(int(c), float(tot), int(c) * batch if s else 0))
            for r, s, m, c, tot in zip(self.r, self.s, self.log_mass, self.count, self.total)
        ]

    def record(self):
        k = int(np.argmax(self.log_mass))
        p = self.p_ic
        return MonitorRecord(self.t, p, p < self.config.delta,
                             (int(self.r[k]), int(self.s[k])), int(self.r.size))


def filter_init(config):
    """Empty filter state; the first observation creates ``q_1(0, 0) = 1``."""
    return FilterState(config)


def filter_step(state, y):
    """Absorb one observation; returns ``(state, record)`` (state updated in place)."""
    cfg = state.config
    model = cfg.model
    y = float(model.check(y))

    if state.t == 0:
        state.r = np.zeros(1, dtype=np.int64)
        state.s = np.zeros(1, dtype=np.int8)
        state.log_mass = np.zeros(1)
        state.count = np.zeros(1)
        state.total = np.zeros(1)
        state.t = 1
        return state, state.record()

    t = state.t
    r, s, lm = state.r, state.s, state.log_mass
    ooc = s == 1
    ic = ~ooc
    d = t - r

    log_h = np.empty(r.size)
    log_stay = np.empty(r.size)
    log_h[ic], log_stay[ic] = cfg.dur_ic.log_hazards(d[ic])
    if cfg.absorbing_ooc:
        log_h[ooc], log_stay[ooc] = -np.inf, 0.0
    else:
        log_h[ooc], log_stay[ooc] = cfg.dur_ooc.log_hazards(d[ooc])

    ic_pred = float(model.log_pred_ic(y))
    log_w = np.full(r.size, ic_pred)
    log_w[ooc] = model.log_pred_ooc(state.count[ooc], state.total[ooc], y)

    with np.errstate(invalid="ignore"):
        enter_ooc = float(model.log_pred_ooc(0.0, 0.0, y)) + _lse(lm[ic] + log_h[ic])
        enter_ic = ic_pred + _lse(lm[ooc] + log_h[ooc]) if not cfg.absorbing_ooc else -np.inf
        cont = lm + log_w + log_stay

    count = state.count + ooc
    total = state.total + np.where(ooc, y, 0.0)

    # zero-mass states stay in the support; only (0, 1) is never created
    if cfg.absorbing_ooc:
        new_r, new_s, new_m, new_c, new_y = [t], [1], [enter_ooc], [1.0], [y]
    else:
        new_r, new_s, new_m, new_c, new_y = [t, t], [0, 1], [enter_ic, enter_ooc], [0.0, 1.0], [0.0, y]
    lm = np.concatenate([cont, new_m])
    if not np.isfinite(lm).any():
        raise NumericalFailure(f"posterior mass vanished at t={t + 1} (y={y!r})")
    state.r = np.concatenate([r, new_r])
    state.s = np.concatenate([s, np.array(new_s, dtype=np.int8)])
    state.log_mass = lm - logsumexp(lm)
    state.count = np.concatenate([count, new_c])
    state.total = np.concatenate([total, new_y])
    state.t = t + 1
    if cfg.prune_eps > 0:
        filter_prune(state, cfg.prune_eps)
    return state, state.record()


def _lse(a):
    return logsumexp(a) if a.size else -np.inf


def filter_prune(state, epsilon):
    """Drop states with normalised mass below ``epsilon`` and renormalise."""
    if not 0 <= epsilon <= 0.01:
        raise DomainError(f"epsilon must lie in [0, 0.01], got {epsilon}")
    if epsilon == 0 or state.t == 0:
        return state
    keep = state.log_mass >= np.log(epsilon)
    if not keep.any():
        raise NumericalFailure("pruning would remove every state")
    for name in ("r", "s", "log_mass", "count", "total"):
        setattr(state, name, getattr(state, name)[keep])
    state.log_mass = state.log_mass - logsumexp(state.log_mass)
    return state


def run_stream(config, observations):
    """Run the filter over a whole sequence and return one record per observation."""
    state = filter_init(config)
    records = []
    for y in observations:
        state, rec = filter_step(state, y)
        records.append(rec)
    return records


def run_batch(models, observations, dur_ic, dur_ooc, absorbing_ooc=False):
    """Exact ``p_ic`` paths for many equal-length streams at once, without pruning.

    ``models`` is one observation model or a list with one per stream; all
    must share the same out-of-control prior (only their in-control
    references may differ). Returns an array of shape ``(B, T)``.
    """
    Y = np.atleast_2d(np.asarray(observations, dtype=float))
    B, T = Y.shape
    if not isinstance(models, (list, tuple)):
        models = [models] * B
    if len(models) != B:
        raise ValueError("need one model per stream")
    for m, row in zip(models, Y):
        m.check(row)
    ooc_model = models[0]
    ic = np.stack([m.log_pred_ic(row) for m, row in zip(models, Y)])
    csum = np.concatenate([np.zeros((B, 1)), np.cumsum(Y, axis=1)], axis=1)

    L0 = np.full((B, T), -np.inf)  # in-control state whose segment began after obs r
    L1 = np.full((B, T), -np.inf)  # out-of-control state, r >= 1
    out = np.empty((B, T))
    if T == 0:
        return out
    L0[:, 0] = 0.0
    out[:, 0] = 1.0
    for t in range(1, T):
        y = Y[:, t:t + 1]
        r = np.arange(t)
        d = t - r
        lh0, ls0 = dur_ic.log_hazards(d)
        if absorbing_ooc:
            lh1, ls1 = np.full(t, -np.inf), np.zeros(t)
        else:
            lh1, ls1 = dur_ooc.log_hazards(d)
        old0 = L0[:, :t]
        old1 = L1[:, 1:t]
        with np.errstate(invalid="ignore"):
            enter_ooc = ooc_model.log_pred_ooc(0.0, 0.0, y[:, 0]) + logsumexp(old0 + lh0, axis=1)
            if absorbing_ooc or t == 1:
                enter_ic = np.full(B, -np.inf)
            else:
                enter_ic = ic[:, t] + logsumexp(old1 + lh1[1:], axis=1)
            if t > 1:
                w1 = ooc_model.log_pred_ooc(d[1:].astype(float), csum[:, t:t + 1] - csum[:, 1:t], y)
                L1[:, 1:t] = old1 + w1 + ls1[1:]
            L0[:, :t] = old0 + ic[:, t:t + 1] + ls0
        L0[:, t] = enter_ic
        L1[:, t] = enter_ooc
        norm = logsumexp(np.concatenate([L0[:, :t + 1], L1[:, 1:t + 1]], axis=1), axis=1)
        if not np.all(np.isfinite(norm)):
            bad = int(np.flatnonzero(~np.isfinite(norm))[0])
            raise NumericalFailure(f"posterior mass vanished in stream {bad} at t={t + 1}")
        L0[:, :t + 1] -= norm[:, None]
        L1[:, 1:t + 1] -= norm[:, None]
        out[:, t] = np.minimum(1.0, np.exp(L0[:, :t + 1]).sum(axis=1))
    return out

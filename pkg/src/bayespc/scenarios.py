"""Simulation scenarios: latent trajectories, Phase I samples and scoring windows."""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import DomainError

# tolerance when comparing a latent value with an acceptability limit; ramps
# such as 0.01 + 0.03 * 20 / 60 must compare equal to 0.02
_LIMIT_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    """Latent value over observations ``start..end`` (1-based, inclusive).

    A ramp moves linearly from ``value`` towards ``end_value`` and reaches it
    at ``end``: ``value + (end_value - value) * (t - start + 1) / (end - start + 1)``.
    For pool-resampling scenarios ``value`` names a pool.
    """

    start: int
    end: int
    value: object
    end_value: object = None
    regime: Optional[int] = None

    def values(self):
        t = np.arange(self.start, self.end + 1)
        if self.end_value is None:
            return np.full(t.size, self.value, dtype=float)
        frac = (t - self.start + 1) / (self.end - self.start + 1)
        return self.value + (self.end_value - self.value) * frac


@dataclass(frozen=True)
class Phase1Spec:
    """In-control reference sample: ``size`` draws, optionally contaminated.

    Each draw comes from the in-control parameter ``param`` with probability
    ``1 - contamination`` and from ``contaminant`` otherwise.
    """

    size: int
    param: float
    contamination: float = 0.0
    contaminant: Optional[float] = None


@dataclass(frozen=True)
class Event:
    """A detection (first signal) or recovery (first non-signal) inside a window.

    The delay is ``t - origin``. ``new_episode`` demands that a signal episode
    *start* inside the window; ``given`` names an event that must have been
    observed for this one to be scored.
    """

    name: str
    kind: str
    start: int
    end: int
    origin: int
    new_episode: bool = False
    given: Optional[str] = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    horizon: int
    segments: tuple
    observation: str
    obs_param: object = None
    phase1: Optional[Phase1Spec] = None
    events: tuple = ()
    false_windows: tuple = ()
    limits: Optional[tuple] = None
    description: str = ""

    def __post_init__(self):
        expected = 1
        for seg in self.segments:
            if seg.start != expected or seg.end < seg.start:
                raise DomainError(f"segments of {self.name!r} must tile 1..{self.horizon} without gaps")
            expected = seg.end + 1
        if self.segments and expected != self.horizon + 1:
            raise DomainError(f"segments of {self.name!r} do not cover 1..{self.horizon}")
        for ev in self.events:
            if not 1 <= ev.start <= ev.end <= self.horizon:
                raise DomainError(f"event window {ev.name} lies outside the horizon")

    def latent(self):
        if not self.segments:
            return np.zeros(0)
        if self.observation == "pool-resampling":
            return np.concatenate([[seg.value] * (seg.end - seg.start + 1) for seg in self.segments])
        return np.concatenate([seg.values() for seg in self.segments])

    def regimes(self):
        """1 where the process is truly out of control / unacceptable, else 0."""
        if self.limits is not None:
            lo, hi = self.limits
            theta = self.latent()
            return ((theta > hi + _LIMIT_TOL) | (theta < lo - _LIMIT_TOL)).astype(int)
        if not self.segments:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.full(seg.end - seg.start + 1, seg.regime or 0, dtype=int)
                               for seg in self.segments])

    @property
    def change_time(self):
        """First truly out-of-control observation, or ``None``."""
        reg = self.regimes()
        return int(np.argmax(reg)) + 1 if reg.any() else None


class ScenarioDraw(NamedTuple):
    observations: np.ndarray
    latent: np.ndarray
    regimes: np.ndarray
    phase1: Optional[np.ndarray]


def draw_phase1(spec, observation, rng, batch_size=None):
    """Phase I sample; uniform and base draws are always consumed, so clean and
    contaminated generators use the stream identically."""
    m = spec.size
    u = rng.random(m)
    bad = u < spec.contamination
    param = np.where(bad, spec.contaminant if spec.contaminant is not None else spec.param, spec.param)
    if observation == "exponential-rate":
        return rng.standard_exponential(m) / param
    if observation == "binomial-N":
        return rng.binomial(batch_size, param).astype(float)
    raise DomainError(f"no Phase I generator for {observation!r}")


def generate_scenario(spec, rng, pools=None):
    """Draw Phase I data (if any) and then the monitored sequence."""
    phase1 = None
    if spec.phase1 is not None:
        phase1 = draw_phase1(spec.phase1, spec.observation, rng, spec.obs_param)
    theta = spec.latent()
    T = spec.horizon
    kind = spec.observation
    if kind == "exponential-rate":
        y = rng.standard_exponential(T) / theta
    elif kind == "binomial-N":
        y = rng.binomial(int(spec.obs_param), theta).astype(float)
    elif kind == "gaussian":
        y = theta + spec.obs_param * rng.standard_normal(T)
    elif kind == "multivariate-gaussian":
        chol = np.linalg.cholesky(np.asarray(spec.obs_param, dtype=float))
        means = np.stack([np.asarray(seg.value, dtype=float)
                          for seg in spec.segments for _ in range(seg.end - seg.start + 1)])
        y = means + rng.standard_normal(means.shape) @ chol.T
    elif kind == "pool-resampling":
        if pools is None:
            raise DomainError("pool-resampling scenarios need data pools")
        rows = []
        for seg in spec.segments:
            pool = np.asarray(pools[seg.value])
            rows.append(pool[rng.integers(0, pool.shape[0], size=seg.end - seg.start + 1)])
        y = np.concatenate(rows) if rows else np.zeros((0, 0))
    else:
        raise DomainError(f"unknown observation model {kind!r}")
    return ScenarioDraw(y, theta, spec.regimes(), phase1)


def _const(start, end, value, regime=None):
    return Segment(start, end, value, regime=regime)


_EXP_PHASE1 = Phase1Spec(50, 10.0)

SINGLE_CHANGE = ScenarioSpec(
    "single-change-exp", 200,
    (_const(1, 100, 10.0, 0), _const(101, 200, 40.0, 1)),
    "exponential-rate", phase1=_EXP_PHASE1,
    events=(Event("d1", "detect", 101, 200, 100),),
    false_windows=((1, 100),),
    description="Exponential(10) then Exponential(40) after t=100",
)

_RECOVERABLE_EVENTS = (
    Event("d1", "detect", 51, 100, 50),
    Event("d2", "recover", 101, 150, 100, given="d1"),
    Event("d3", "detect", 151, 200, 150),
)


def recoverable_exp(name="recoverable-exp", ooc1=40.0, ooc2=50.0, phase1=_EXP_PHASE1,
                    ramp=False, description=""):
    first = Segment(51, 100, 10.0, end_value=ooc1, regime=1) if ramp else _const(51, 100, ooc1, 1)
    return ScenarioSpec(
        name, 200,
        (_const(1, 50, 10.0, 0), first, _const(101, 150, 10.0, 0), _const(151, 200, ooc2, 1)),
        "exponential-rate", phase1=phase1, events=_RECOVERABLE_EVENTS,
        false_windows=((1, 50), (101, 150)), description=description,
    )


RECOVERABLE = recoverable_exp(description="rates 10 / 40 / 10 / 50 on blocks of 50")
CONTAMINATED_5 = recoverable_exp("contaminated-5", phase1=Phase1Spec(50, 10.0, 0.05, 40.0),
                                 description="recoverable-exp with 5% Exponential(40) Phase I contamination")
CONTAMINATED_10 = recoverable_exp("contaminated-10", phase1=Phase1Spec(50, 10.0, 0.10, 40.0),
                                  description="recoverable-exp with 10% Phase I contamination")
RAMP = recoverable_exp("ramp-exp", ramp=True,
                       description="first out-of-control rate ramps 10 -> 40 over t=51..100")
WRONG_DIRECTION = recoverable_exp("wrong-direction-exp", ooc1=5.0, ooc2=5.0,
                                  description="out-of-control rate 5, opposite to the prior")

BINOMIAL_EXAMPLE = ScenarioSpec(
    "binomial-example", 200,
    (_const(1, 50, 0.01, 0), _const(51, 100, 0.015, 1),
     _const(101, 150, 0.01, 0), _const(151, 200, 0.02, 1)),
    "binomial-N", obs_param=500, events=_RECOVERABLE_EVENTS,
    false_windows=((1, 50), (101, 150)),
    description="defect proportion 0.01 / 0.015 / 0.01 / 0.02, N=500, theta0 known",
)

GAUSSIAN_DRIFT = ScenarioSpec(
    "gaussian-drift", 200,
    (Segment(1, 50, 0.0), Segment(51, 100, 0.0, end_value=0.9), Segment(101, 140, 0.9),
     Segment(141, 180, 0.9, end_value=0.0), Segment(181, 200, 0.0)),
    "gaussian", obs_param=0.15,
    events=(Event("d1", "detect", 78, 157, 78), Event("d2", "recover", 158, 200, 158, given="d1")),
    false_windows=((1, 77), (158, 200)), limits=(-0.5, 0.5),
    description="drift to 0.9 and back, N(theta, 0.15^2) observations, A=[-0.5, 0.5]",
)

BINOMIAL_DRIFT = ScenarioSpec(
    "binomial-drift", 200,
    (Segment(1, 50, 0.01), Segment(51, 110, 0.01, end_value=0.04), Segment(111, 150, 0.04),
     Segment(151, 200, 0.04, end_value=0.01)),
    "binomial-N", obs_param=500, phase1=Phase1Spec(50, 0.01),
    events=(Event("d1", "detect", 71, 183, 71), Event("d2", "recover", 184, 200, 184, given="d1")),
    false_windows=((1, 70), (184, 200)), limits=(-np.inf, 0.02),
    description="defect proportion drifts 0.01 -> 0.04 -> 0.01, unacceptable above 0.02",
)

WINE_SEQUENCE = ScenarioSpec(
    "wine-sequence", 150,
    (Segment(1, 50, "q7", regime=0), Segment(51, 100, "q6", regime=1), Segment(101, 150, "q7", regime=0)),
    "pool-resampling",
    events=(Event("d1", "detect", 51, 100, 50, new_episode=True),
            Event("d2", "recover", 101, 150, 100, given="d1")),
    false_windows=((1, 50),),
    description="50 quality-7, 50 quality-6, 50 quality-7 rows drawn with replacement",
)

WINE_CALIBRATION = ScenarioSpec(
    "wine-calibration", 150, (Segment(1, 150, "q7", regime=0),), "pool-resampling",
    false_windows=((1, 150),),
)

SCENARIOS = {s.name: s for s in (
    SINGLE_CHANGE, RECOVERABLE, CONTAMINATED_5, CONTAMINATED_10, RAMP, WRONG_DIRECTION,
    BINOMIAL_EXAMPLE, GAUSSIAN_DRIFT, BINOMIAL_DRIFT,
)}

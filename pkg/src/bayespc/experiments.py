"""Replication engine for the simulation studies.

Every replicate draws from its own named random stream
``stream(seed, <experiment>, <replicate>, <purpose>)``, so results do not
depend on the worker count (``BAYESPC_WORKERS``, default 1).
"""
import multiprocessing
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logit

from . import scenarios as sc
from .calibration import calibrate_paths, default_grid
from .conjugate import (BetaAB, BinomialBeta, ExponentialGamma, InControlReference,
                        beta_from_mean_sd, beta_phase1_update, gamma_from_mean_sd,
                        gamma_phase1_update)
from .gaussian import interval_prob, kalman_filter
from .metrics import aggregate, score_run
from .particle import (AcceptableRegion, binomial_logit_walk, gaussian_random_walk,
                       run_tracking)
from .recoverable import DurationPrior, run_batch
from .rng import stream

BASELINE_DELTA = 0.485

_TASK = None


def _call(i):
    return _TASK(i)


def parallel_map(fn, n, workers=None):
    """``[fn(i) for i in range(n)]``, optionally over forked worker processes."""
    global _TASK
    if workers is None:
        workers = int(os.environ.get("BAYESPC_WORKERS", "1"))
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    _TASK = fn
    try:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            return pool.map(_call, range(n), chunksize=max(1, n // (4 * workers)))
    finally:
        _TASK = None


@dataclass
class ExpGammaDesign:
    """Exponential-Gamma recoverable monitor built from a Phase I sample."""

    ic_mean: float = 10.0
    ic_sd: float = 3.0
    ooc_mean: float = 40.0
    ooc_sd: float = 10.0
    dur_p: float = 1.0 / 200
    absorbing: bool = False

    @property
    def ic_prior(self):
        return gamma_from_mean_sd(self.ic_mean, self.ic_sd)

    @property
    def ooc_prior(self):
        return gamma_from_mean_sd(self.ooc_mean, self.ooc_sd)

    def reference(self, phase1):
        return InControlReference.posterior(gamma_phase1_update(self.ic_prior, phase1))

    def model(self, phase1):
        return ExponentialGamma(self.reference(phase1), self.ooc_prior)

    def paths(self, phase1s, observations):
        dur = DurationPrior.geometric(self.dur_p)
        models = [self.model(x) for x in phase1s]
        return run_batch(models, observations, dur, dur, absorbing_ooc=self.absorbing)

    def label(self):
        return (f"ic=({self.ic_mean:g},{self.ic_sd:g}) ooc=({self.ooc_mean:g},{self.ooc_sd:g}) "
                f"dur_p={self.dur_p:g}")


@dataclass
class BinomialExampleDesign:
    """Known in-control proportion, Beta out-of-control prior, geometric durations."""

    theta0: float = 0.01
    batch_size: int = 500
    ooc_mean: float = 0.02
    ooc_sd: float = 0.01
    mean_duration: float = 100.0

    def model(self, phase1=None):
        return BinomialBeta(InControlReference.point(self.theta0),
                            beta_from_mean_sd(self.ooc_mean, self.ooc_sd), self.batch_size)

    def paths(self, phase1s, observations):
        dur = DurationPrior.geometric_mean(self.mean_duration)
        return run_batch(self.model(), observations, dur, dur)

    def label(self):
        return f"theta0={self.theta0:g} ooc=({self.ooc_mean:g},{self.ooc_sd:g}) mean_dur={self.mean_duration:g}"


@dataclass
class GaussianTrackingDesign:
    state_sd: float = 0.08
    obs_sd: float = 0.15
    init_mean: float = 0.0
    init_sd: float = 0.2
    lower: float = -0.5
    upper: float = 0.5
    particles: int = 5000
    resample_threshold: float = 0.5

    def state_model(self, phase1=None):
        return gaussian_random_walk(self.state_sd, self.obs_sd, self.init_mean, self.init_sd)

    @property
    def region(self):
        return AcceptableRegion.interval(self.lower, self.upper)

    def label(self):
        return f"P={self.particles}"


@dataclass
class BinomialTrackingDesign:
    """Logit random walk initialised from the Phase I Beta posterior."""

    state_sd: float = 0.08
    batch_size: int = 500
    prior: BetaAB = field(default_factory=lambda: BetaAB(1.0, 99.0))
    limit: float = 0.02
    particles: int = 5000
    resample_threshold: float = 0.5

    def posterior(self, phase1):
        return beta_phase1_update(self.prior, phase1, self.batch_size)

    def state_model(self, phase1):
        return binomial_logit_walk(self.state_sd, self.batch_size, self.posterior(phase1))

    @property
    def region(self):
        return AcceptableRegion.below(logit(self.limit))

    def label(self):
        return f"P={self.particles}"


def _tracking_runner(design, draws, seed, name):
    def one(b):
        d = draws[b]
        rng = stream(seed, name, b, "filter")
        return run_tracking(design.state_model(d.phase1), design.region, d.observations,
                            design.particles, rng, design.resample_threshold)
    return one


def simulate(spec, design, replicates, seed, pools=None):
    """Draw ``replicates`` sequences and run the design's monitor on each.

    Returns ``(draws, paths, extras)``; ``extras`` holds particle diagnostics.
    """
    draws = [sc.generate_scenario(spec, stream(seed, spec.name, b, "data"), pools)
             for b in range(replicates)]
    extras = {}
    if hasattr(design, "paths"):
        paths = design.paths([d.phase1 for d in draws], np.stack([d.observations for d in draws]))
        runs = None
    else:
        runs = parallel_map(_tracking_runner(design, draws, seed, spec.name), replicates)
        paths = np.stack([r.p for r in runs])
        extras["mean_ess"] = float(np.mean([r.ess.mean() for r in runs]))
        extras["resample_fraction"] = float(np.mean([r.resampled.mean() for r in runs]))
    return draws, paths, extras, runs


def run_experiment(spec, design, replicates, seed, delta, label=None):
    """Simulate, monitor and score; returns ``(AggregateTable, paths)``."""
    if replicates < 1:
        raise ValueError("need at least one replicate")
    _, paths, extras, _ = simulate(spec, design, replicates, seed)
    runs = [score_run(p, spec, delta) for p in paths]
    extras = dict(extras, delta=delta)
    table = aggregate(runs, spec.name, label or design.label(), extras)
    return table, paths


# --- posterior-predictive calibration -------------------------------------------------

def exp_gamma_calibration_paths(design, replicates, seed, horizon=200, phase1_size=50,
                                true_rate=10.0, name="calibration"):
    """Pre-posterior in-control paths: Phase I, a rate drawn from its posterior,
    then an all-in-control sequence monitored by the exact filter."""
    phase1s, ys = [], []
    for b in range(replicates):
        g = stream(seed, name, b)
        x = g.standard_exponential(phase1_size) / true_rate
        post = gamma_phase1_update(design.ic_prior, x)
        rate = g.gamma(post.shape, 1.0 / post.rate)
        phase1s.append(x)
        ys.append(g.standard_exponential(horizon) / rate)
    return design.paths(phase1s, np.stack(ys))


def binomial_tracking_calibration_paths(design, replicates, seed, horizon=200, phase1_size=50,
                                        true_theta=0.01, name="calibration"):
    def one(b):
        g = stream(seed, name, b, "data")
        x = g.binomial(design.batch_size, true_theta, size=phase1_size).astype(float)
        post = design.posterior(x)
        theta = g.beta(post.a, post.b)
        y = g.binomial(design.batch_size, theta, size=horizon).astype(float)
        run = run_tracking(design.state_model(x), design.region, y, design.particles,
                           stream(seed, name, b, "filter"), design.resample_threshold)
        return run.p
    return np.stack(parallel_map(one, replicates))


def baseline_calibration(replicates=1000, seed=2024, design=None, grid=None):
    design = design or ExpGammaDesign()
    paths = exp_gamma_calibration_paths(design, replicates, seed)
    return calibrate_paths(paths, grid if grid is not None else default_grid(), target=1.0)


# --- tables ----------------------------------------------------------------------------

def _scaled(n, scale):
    return max(1, int(round(n * scale)))


def table1(scale=1.0, seed=2024, delta=BASELINE_DELTA):
    B = _scaled(1000, scale)
    design = ExpGammaDesign()
    rows = []
    for i, spec in enumerate((sc.SINGLE_CHANGE, sc.RECOVERABLE)):
        table, _ = run_experiment(spec, design, B, seed + i, delta)
        rows.append(dict(table.row(), method="Bayesian"))
    return rows


TABLE2_ROWS = [
    (10, 3, 50, 40, 10),
    (10, 3, 50, 20, 10),
    (10, 3, 50, 100, 10),
    (10, 3, 50, 60, 10),
    (15, 5, 50, 40, 10),
    (15, 5, 5, 40, 10),
    (1000, 10000, 50, 40, 10),
    (1000, 10000, 5, 40, 10),
]


def table2_row(row, scale=1.0, seed=2024):
    """Recalibrate and evaluate one prior-sensitivity configuration (rows are 1-based)."""
    mu0, sd0, m, mu1, sd1 = TABLE2_ROWS[row - 1]
    design = ExpGammaDesign(mu0, sd0, mu1, sd1)
    B_cal = _scaled(1000 if row == 1 else 500, scale)
    phase1 = sc.Phase1Spec(m, 10.0)
    paths = exp_gamma_calibration_paths(design, B_cal, seed + 100 * row, phase1_size=m)
    cal = calibrate_paths(paths, default_grid(), target=1.0)
    spec = replace(sc.RECOVERABLE, name=f"table2-row{row}", phase1=phase1)
    table, _ = run_experiment(spec, design, _scaled(1000, scale), seed + 100 * row + 1, cal.delta)
    return dict(table.row(), row=row, mu0=mu0, sigma0=sd0, m=m, mu1=mu1, sigma1=sd1,
                delta=cal.delta, F_cal=cal.achieved_episodes, F_cal_mcse=cal.mcse,
                calibration_attained=cal.attained)


def table2(scale=1.0, seed=2024, rows=None):
    return [table2_row(r, scale, seed) for r in (rows or range(1, 9))]


TABLE3_SCENARIOS = [
    ("Clean baseline", sc.RECOVERABLE),
    ("5% Phase I contamination", sc.CONTAMINATED_5),
    ("10% Phase I contamination", sc.CONTAMINATED_10),
    ("Ramp first OOC", sc.RAMP),
    ("Wrong-direction OOC", sc.WRONG_DIRECTION),
]


def table3(scale=1.0, seed=2024, delta=BASELINE_DELTA):
    B = _scaled(1000, scale)
    design = ExpGammaDesign()
    rows = []
    for i, (label, spec) in enumerate(TABLE3_SCENARIOS):
        table, _ = run_experiment(spec, design, B, seed + 10 + i, delta)
        rows.append(dict(table.row(), label=label))
    return rows


def table4(scale=1.0, seed=2024, particle_counts=(500, 2000, 5000), delta=0.5):
    """Particle filter against the exact Kalman filter on the Gaussian drift path."""
    B = _scaled(200, scale)
    spec = sc.GAUSSIAN_DRIFT
    draws = [sc.generate_scenario(spec, stream(seed, spec.name, b, "data")) for b in range(B)]
    Y = np.stack([d.observations for d in draws])
    base = GaussianTrackingDesign()
    km, kv = kalman_filter(Y, base.init_mean, base.init_sd ** 2, base.state_sd ** 2, base.obs_sd ** 2)
    kp = interval_prob(km, np.sqrt(kv), base.lower, base.upper)
    rows = []
    for P in particle_counts:
        design = replace(base, particles=P)
        runs = parallel_map(_tracking_runner(design, draws, seed, f"{spec.name}-P{P}"), B)
        err = np.stack([r.p for r in runs]) - kp
        merr = np.stack([r.means for r in runs]) - km
        abs_err = np.abs(err).ravel()
        scored = aggregate([score_run(r.p, spec, delta) for r in runs])
        rows.append(dict(
            P=P, replicates=B,
            rmse_mean=float(np.sqrt(np.mean(merr ** 2))),
            rmse_pA=float(np.sqrt(np.mean(err ** 2))),
            mae_pA=float(abs_err.mean()),
            q95_abs_err_pA=float(np.quantile(abs_err, 0.95)),
            max_abs_err_pA=float(abs_err.max()),
            mean_ess=float(np.mean([r.ess.mean() for r in runs])),
            resample_fraction=float(np.mean([r.resampled.mean() for r in runs])),
            d1_mean=scored.delay_mean["d1"], d1_miss=scored.miss_rate["d1"],
            d2_mean=scored.delay_mean["d2"], d2_miss=scored.miss_rate["d2"],
        ))
    return rows


def table5(scale=1.0, seed=2024, particle_counts=(1000, 5000), fixed_deltas=(0.5, 0.1)):
    """Binomial-logit tracking with row-specific posterior-predictive calibration."""
    B = _scaled(1000, scale)
    B_cal = _scaled(1000, scale)
    spec = sc.BINOMIAL_DRIFT
    rows = []
    for P in particle_counts:
        design = BinomialTrackingDesign(particles=P)
        cal_paths = binomial_tracking_calibration_paths(design, B_cal, seed, name=f"table5-cal-P{P}")
        cal = calibrate_paths(cal_paths, default_grid(), target=1.0)
        spec_p = replace(spec, name=f"{spec.name}-P{P}")
        _, paths, extras, _ = simulate(spec_p, design, B, seed + 1)
        for delta, kind in [(cal.delta, "calibrated")] + [(d, "fixed") for d in fixed_deltas]:
            table = aggregate([score_run(p, spec, delta) for p in paths], spec.name, design.label(),
                              extras)
            rows.append(dict(table.row(("d1", "d2")), P=P, delta=delta, threshold=kind,
                             F_cal=cal.achieved_episodes if kind == "calibrated" else np.nan,
                             F_cal_mcse=cal.mcse if kind == "calibrated" else np.nan))
    return rows


def fig1(seed=2024, delta=0.5):
    """Single replicate of the defect-proportion example: data and ``p_ic`` path."""
    spec = sc.BINOMIAL_EXAMPLE
    draw = sc.generate_scenario(spec, stream(seed, spec.name, 0, "data"))
    p = BinomialExampleDesign().paths([None], draw.observations[None, :])[0]
    return [dict(t=t + 1, y=draw.observations[t], theta=draw.latent[t], regime=int(draw.regimes[t]),
                 p_ic=p[t], signaled=bool(p[t] < delta)) for t in range(spec.horizon)]

"""Held-out multivariate illustration on the white wine quality data.

The data file is the public semicolon-delimited ``winequality-white.csv``
(11 physicochemical columns plus ``quality``); it is not bundled. Set
``BAYESPC_WINE_FILE`` or pass a path explicitly.
"""
import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .calibration import bootstrap_block_means, calibrate_paths, calibrate_region_radius, default_grid
from .exceptions import DomainError
from .experiments import parallel_map
from .gaussian import mahalanobis_sq, shrink_covariance
from .metrics import aggregate, score_run
from .particle import AcceptableRegion, multivariate_gaussian_walk, run_tracking
from .rng import stream
from .scenarios import WINE_CALIBRATION, WINE_SEQUENCE, generate_scenario

WINE_COLUMNS = (
    "fixed acidity", "volatile acidity", "citric acid", "residual sugar", "chlorides",
    "free sulfur dioxide", "total sulfur dioxide", "density", "pH", "sulphates", "alcohol",
    "quality",
)


class MissingDataError(FileNotFoundError):
    pass


def default_wine_path():
    return os.environ.get("BAYESPC_WINE_FILE")


def load_wine(path=None, delimiter=";"):
    """Return ``(features (n, 11), quality (n,))``; parse errors name the row."""
    path = path or default_wine_path()
    if not path or not os.path.exists(path):
        raise MissingDataError(f"wine data file not found: {path!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = [h.strip().strip('"') for h in next(reader, [])]
        if tuple(header) != WINE_COLUMNS:
            raise DomainError(f"unexpected wine header {header}")
        rows = []
        for i, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(WINE_COLUMNS):
                raise DomainError(f"row {i}: expected {len(WINE_COLUMNS)} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec])
            except ValueError as exc:
                raise DomainError(f"row {i}: {exc}") from None
    data = np.asarray(rows, dtype=float).reshape(-1, len(WINE_COLUMNS))
    return data[:, :-1], data[:, -1].astype(int)


@dataclass
class WineConfig:
    split_seed: int = 2024
    split_sizes: tuple = (440, 220, 220)
    rho: float = 0.05
    c_theta: float = 0.2
    block_size: int = 10
    n_boot: int = 5000
    quantile: float = 0.95
    particles: int = 5000
    resample_threshold: float = 0.5
    calibration_sequences: int = 500
    evaluation_sequences: int = 1000
    band: tuple = (0.75, 1.25)
    good_quality: int = 7
    bad_quality: int = 6


@dataclass
class WineResult:
    condition_raw: float
    condition_shrunk: float
    c_a: float
    exceed_good: float
    exceed_bad: float
    calibration: object
    table: object
    histogram: dict = field(default_factory=dict)
    representative_path: np.ndarray = None

    def summary(self):
        row = dict(condition_raw=self.condition_raw, condition_shrunk=self.condition_shrunk,
                   c_A=self.c_a, exceed_q7=self.exceed_good, exceed_q6=self.exceed_bad,
                   delta=self.calibration.delta, F_cal=self.calibration.achieved_episodes,
                   F_cal_mcse=self.calibration.mcse,
                   calibration_attained=self.calibration.attained)
        row.update(self.table.row(("d1", "d2")))
        return row


def split_pools(X, quality, cfg):
    """Standardise by the reference pool.

    Returns ``(pools, center, raw_cov, (mean, sd))`` where the last pair maps
    raw rows to the standardised scale.
    """
    good = X[quality == cfg.good_quality]
    bad = X[quality == cfg.bad_quality]
    n_ref, n_cal, n_test = cfg.split_sizes
    if good.shape[0] < n_ref + n_cal + n_test:
        raise DomainError(f"only {good.shape[0]} quality-{cfg.good_quality} rows for a "
                          f"{n_ref}/{n_cal}/{n_test} split")
    if bad.shape[0] == 0:
        raise DomainError(f"no quality-{cfg.bad_quality} rows")
    perm = stream(cfg.split_seed, "wine-split").permutation(good.shape[0])
    ref = good[perm[:n_ref]]
    mu, sd = ref.mean(axis=0), ref.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise DomainError("a feature is constant in the reference pool")
    z = lambda a: (a - mu) / sd
    pools = dict(
        ref=z(ref),
        cal=z(good[perm[n_ref:n_ref + n_cal]]),
        test=z(good[perm[n_ref + n_cal:n_ref + n_cal + n_test]]),
        q6=z(bad),
    )
    pools["q7"] = np.vstack([pools["cal"], pools["test"]])
    center = pools["ref"].mean(axis=0)
    return pools, center, np.cov(pools["ref"], rowvar=False), (mu, sd)


def wine_model(cov, center, cfg):
    b = cfg.block_size
    return multivariate_gaussian_walk(cov.shrunk, cfg.c_theta * cov.shrunk / b, center, cov.shrunk / b)


def _runner(model, region, draws, cfg, seed, name):
    def one(i):
        return run_tracking(model, region, draws[i].observations, cfg.particles,
                            stream(seed, name, i, "filter"), cfg.resample_threshold)
    return one


def histogram(values, bins):
    counts, _ = np.histogram(values, bins=bins)
    return counts


def wine_pipeline(X, quality, cfg=None, seed=2024, scale=1.0):
    """Full held-out illustration: region, threshold calibration and evaluation."""
    cfg = cfg or WineConfig()
    pools, center, raw, _ = split_pools(X, quality, cfg)
    cov = shrink_covariance(raw, cfg.rho)

    rng = stream(seed, "wine-boot")
    cal_means = bootstrap_block_means(pools["cal"], cfg.block_size, cfg.n_boot, rng)
    c_a = calibrate_region_radius(cal_means, center, cov.inverse, cfg.quantile)
    good_d2 = mahalanobis_sq(bootstrap_block_means(pools["test"], cfg.block_size, cfg.n_boot, rng),
                             center, cov.inverse)
    bad_d2 = mahalanobis_sq(bootstrap_block_means(pools["q6"], cfg.block_size, cfg.n_boot, rng),
                            center, cov.inverse)
    bins = np.linspace(0.0, max(np.quantile(bad_d2, 0.995), 2 * c_a), 61)

    region = AcceptableRegion.ellipsoid(center, cov.inverse, c_a)
    model = wine_model(cov, center, cfg)

    n_cal = max(1, int(round(cfg.calibration_sequences * scale)))
    cal_draws = [generate_scenario(WINE_CALIBRATION, stream(seed, "wine-cal", i, "data"), pools)
                 for i in range(n_cal)]
    cal_runs = parallel_map(_runner(model, region, cal_draws, cfg, seed, "wine-cal"), n_cal)
    calib = calibrate_paths(np.stack([r.p for r in cal_runs]), default_grid(), band=cfg.band)

    n_eval = max(1, int(round(cfg.evaluation_sequences * scale)))
    draws = [generate_scenario(WINE_SEQUENCE, stream(seed, "wine-eval", i, "data"), pools)
             for i in range(n_eval)]
    runs = parallel_map(_runner(model, region, draws, cfg, seed, "wine-eval"), n_eval)
    paths = np.stack([r.p for r in runs])
    scored = [score_run(p, WINE_SEQUENCE, calib.delta) for p in paths]
    extras = dict(mean_ess=float(np.mean([r.ess.mean() for r in runs])),
                  resample_fraction=float(np.mean([r.resampled.mean() for r in runs])),
                  delta=calib.delta)
    table = aggregate(scored, WINE_SEQUENCE.name, f"P={cfg.particles}", extras)

    return WineResult(
        condition_raw=cov.condition_raw, condition_shrunk=cov.condition_shrunk, c_a=c_a,
        exceed_good=float(np.mean(good_d2 > c_a)), exceed_bad=float(np.mean(bad_d2 > c_a)),
        calibration=calib, table=table,
        histogram=dict(edges=bins, q7=histogram(good_d2, bins), q6=histogram(bad_d2, bins)),
        representative_path=paths[0],
    )

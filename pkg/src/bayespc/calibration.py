"""Choosing the signalling threshold and the acceptable-region radius.

Thresholds are calibrated on stored monitoring paths simulated under
in-control operation: each path is produced once and then scored for every
candidate threshold on the grid.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError
from .gaussian import mahalanobis_sq

RECORD_VERSION = 1


def default_grid(step=0.005):
    """Thresholds ``step, 2*step, ..., 1 - step``."""
    n = int(round(1.0 / step))
    return np.round(np.arange(1, n) * step, 10)


def signals(path, delta):
    return np.asarray(path) < delta


def count_false_episodes(path, delta):
    """Number of no-signal to signal transitions, and number of signalled timepoints.

    The process is treated as not signalling before the first observation.
    """
    sig = signals(path, delta)
    starts = sig & ~np.concatenate([[False], sig[:-1]])
    return int(starts.sum()), int(sig.sum())


def episode_counts(paths, grid):
    """Episode and timepoint counts for every (path, threshold) pair.

    Returns two integer arrays of shape ``(B, len(grid))``.
    """
    P = np.atleast_2d(np.asarray(paths, dtype=float))
    grid = np.asarray(grid, dtype=float)
    sig = P[:, :, None] < grid[None, None, :]
    prev = np.concatenate([np.zeros_like(sig[:, :1]), sig[:, :-1]], axis=1)
    return (sig & ~prev).sum(axis=1), sig.sum(axis=1)


@dataclass
class CalibrationResult:
    delta: float
    achieved_episodes: float
    mcse: float
    grid: list
    mean_episodes: list
    mean_timepoints: list
    target: dict
    replicates: int
    attained: bool = True
    timepoints_mcse: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def curve(self):
        return list(zip(self.grid, self.mean_episodes, self.mean_timepoints))

    def to_json(self):
        return json.dumps(dict(version=RECORD_VERSION, **asdict(self)), indent=1)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        version = data.pop("version", None)
        if version != RECORD_VERSION:
            raise ValueError(f"unsupported calibration record version {version!r}")
        return cls(**data)


def calibrate_paths(paths, grid=None, target=1.0, band=None):
    """Select a threshold from stored in-control paths.

    With ``band=None`` the threshold whose mean number of false-signal
    episodes is closest to ``target`` is chosen. With ``band=(lo, hi)`` the
    choice is restricted to thresholds whose mean episodes fall in the band,
    and the one with the fewest mean signalled timepoints wins. Ties go to the
    larger threshold. If the band is empty the closest miss is returned with
    ``attained=False``.
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be non-empty and strictly increasing")
    B = paths.shape[0]
    if B < 1:
        raise DomainError("need at least one calibration path")
    eps, tps = episode_counts(paths, grid)
    total_eps = eps.sum(axis=0)
    mean_eps = total_eps / B
    mean_tps = tps.sum(axis=0) / B
    idx_rev = np.arange(grid.size)[::-1]  # argmin over reversed order breaks ties upward

    attained = True
    if band is None:
        dist = np.abs(total_eps - target * B)
        k = idx_rev[np.argmin(dist[::-1])]
        spec = {"mode": "closest", "episodes": float(target)}
    else:
        lo, hi = band
        feasible = (mean_eps >= lo) & (mean_eps <= hi)
        spec = {"mode": "band", "low": float(lo), "high": float(hi)}
        if feasible.any():
            cost = np.where(feasible, tps.sum(axis=0), np.inf)
            k = idx_rev[np.argmin(cost[::-1])]
        else:
            attained = False
            miss = np.maximum(lo - mean_eps, mean_eps - hi)
            k = idx_rev[np.argmin(miss[::-1])]

    sd = eps[:, k].std(ddof=1) if B > 1 else 0.0
    tsd = tps[:, k].std(ddof=1) if B > 1 else 0.0
    return CalibrationResult(
        delta=float(grid[k]),
        achieved_episodes=float(mean_eps[k]),
        mcse=float(sd / np.sqrt(B)),
        grid=grid.tolist(),
        mean_episodes=mean_eps.tolist(),
        mean_timepoints=mean_tps.tolist(),
        target=spec,
        replicates=B,
        attained=attained,
        timepoints_mcse=float(tsd / np.sqrt(B)),
    )


def calibrate_threshold(path_generator, n_replicates, grid=None, target=1.0, band=None):
    """Generate ``n_replicates`` in-control paths once each, then calibrate.

    ``path_generator(i)`` must return the monitoring path of replicate ``i``
    and draw its randomness from a stream keyed on ``i``.
    """
    if n_replicates < 1:
        raise DomainError("need at least one calibration replicate")
    paths = np.stack([np.asarray(path_generator(i), dtype=float) for i in range(n_replicates)])
    return calibrate_paths(paths, grid, target, band)


def threshold_from_costs(cost0, cost1):
    """One-period Bayes threshold ``cost1 / (cost0 + cost1)``.

    ``cost0`` is the cost of a false signal, ``cost1`` of a missed departure.
    """
    if not (cost0 > 0 and cost1 > 0):
        raise DomainError("costs must be positive")
    return cost1 / (cost0 + cost1)


def bootstrap_block_means(pool, block_size, n_boot, rng):
    """Means of ``n_boot`` blocks of ``block_size`` rows drawn with replacement."""
    pool = np.asarray(pool, dtype=float)
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise DomainError("pool must be a non-empty (n, d) array")
    idx = rng.integers(0, pool.shape[0], size=(n_boot, block_size))
    return pool[idx].mean(axis=1)


def empirical_quantile(values, q):
    """Smallest value whose empirical CDF reaches ``q``."""
    v = np.sort(np.asarray(values, dtype=float))
    k = max(int(np.ceil(q * v.size - 1e-12)), 1)
    return float(v[k - 1])


def calibrate_region_radius(block_means, center, inverse, quantile=0.95):
    """Empirical ``quantile`` of squared Mahalanobis distances of block means."""
    block_means = np.atleast_2d(np.asarray(block_means, dtype=float))
    if block_means.shape[0] < 1:
        raise DomainError("need at least one block mean")
    if not 0 < quantile < 1:
        raise DomainError("quantile must lie in (0, 1)")
    d2 = mahalanobis_sq(block_means, center, inverse)
    if not np.all(np.isfinite(d2)):
        raise DomainError("non-finite Mahalanobis distances; is the covariance degenerate?")
    return empirical_quantile(d2, quantile)

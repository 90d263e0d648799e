"""Detection/recovery delays and false-signal counts for simulated runs."""
import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunMetrics:
    """Scores for one monitored sequence.

    ``delays[name]`` is ``None`` when the event was missed *or* not eligible;
    ``missed[name]`` is ``None`` only when not eligible (its ``given`` event
    was missed).
    """

    delays: dict
    missed: dict
    false_episodes: int
    false_timepoints: int
    pre_change_episodes: int
    already_signaling_at_transition: bool

    @property
    def d1(self):
        return self.delays.get("d1")

    @property
    def d2(self):
        return self.delays.get("d2")

    @property
    def d3(self):
        return self.delays.get("d3")


def _episode_starts(sig):
    prev = np.concatenate([[False], sig[:-1]])
    return sig & ~prev


def score_run(path, spec, delta=None):
    """Score a path against the scenario's event and false-signal windows.

    ``path`` is either a boolean signal vector or a probability path, in which
    case ``delta`` turns it into signals (``p < delta``).
    """
    path = np.asarray(path)
    sig = path.astype(bool) if delta is None else path < delta
    if sig.size != spec.horizon:
        raise ValueError(f"path has length {sig.size}, scenario horizon is {spec.horizon}")
    starts = _episode_starts(sig)
    t = np.arange(1, sig.size + 1)

    delays, missed = {}, {}
    for ev in spec.events:
        if ev.given is not None and missed.get(ev.given) is not False:
            delays[ev.name] = None
            missed[ev.name] = None
            continue
        lo, hi = ev.start - 1, ev.end
        if ev.kind == "detect":
            hits = starts[lo:hi] if ev.new_episode else sig[lo:hi]
        elif ev.kind == "recover":
            hits = ~sig[lo:hi]
        else:
            raise ValueError(f"unknown event kind {ev.kind!r}")
        if hits.any():
            delays[ev.name] = int(t[lo + int(np.argmax(hits))] - ev.origin)
            missed[ev.name] = False
        else:
            delays[ev.name] = None
            missed[ev.name] = True

    in_false = np.zeros(sig.size, dtype=bool)
    for a, b in spec.false_windows:
        in_false[a - 1:b] = True
    false_starts = starts & in_false
    # a signalled timepoint is false if its episode began inside a false window
    episode_id = np.cumsum(starts)
    false_ids = set(episode_id[false_starts].tolist())
    false_tp = sig & in_false & np.isin(episode_id, list(false_ids))

    change = spec.change_time
    if change is None:
        pre = int(starts.sum())
        already = False
    else:
        pre = int(starts[:change - 1].sum())
        already = bool(sig[change - 2]) if change >= 2 else False
    return RunMetrics(delays, missed, int(false_starts.sum()), int(false_tp.sum()), pre, already)


def _mean_mcse(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.nan, np.nan
    if v.size == 1:
        return float(v[0]), np.nan
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass
class AggregateTable:
    """Per-metric means, Monte Carlo standard errors and miss rates."""

    scenario: str
    config: str
    replicates: int
    delay_mean: dict
    delay_mcse: dict
    miss_rate: dict
    eligible: dict
    false_episodes: float
    false_episodes_mcse: float
    false_timepoints: float
    false_timepoints_mcse: float
    pre_change_episodes: float
    pre_change_mcse: float
    already_signaling: float
    extras: dict = field(default_factory=dict)

    def row(self, names=("d1", "d2", "d3")):
        out = {"scenario": self.scenario, "config": self.config, "replicates": self.replicates}
        for n in names:
            out[f"{n}_mean"] = self.delay_mean.get(n, np.nan)
            out[f"{n}_mcse"] = self.delay_mcse.get(n, np.nan)
            out[f"{n}_miss"] = self.miss_rate.get(n, np.nan)
        out.update(
            F_mean=self.false_episodes, F_mcse=self.false_episodes_mcse,
            false_timepoints_mean=self.false_timepoints, false_timepoints_mcse=self.false_timepoints_mcse,
            pre_change_mean=self.pre_change_episodes, pre_change_mcse=self.pre_change_mcse,
            already_signaling=self.already_signaling,
        )
        out.update(self.extras)
        return out


def aggregate(runs, scenario="", config="", extras=None):
    """Reduce a list of ``RunMetrics``; delay means exclude missed events."""
    runs = list(runs)
    names = []
    for r in runs:
        for n in r.delays:
            if n not in names:
                names.append(n)
    mean, mcse, miss, eligible = {}, {}, {}, {}
    for n in names:
        flags = [r.missed[n] for r in runs if r.missed.get(n) is not None]
        vals = [r.delays[n] for r in runs if r.delays.get(n) is not None]
        mean[n], mcse[n] = _mean_mcse(vals)
        eligible[n] = len(flags)
        miss[n] = float(np.mean(flags)) if flags else np.nan
    f_mean, f_se = _mean_mcse([r.false_episodes for r in runs])
    tp_mean, tp_se = _mean_mcse([r.false_timepoints for r in runs])
    pre_mean, pre_se = _mean_mcse([r.pre_change_episodes for r in runs])
    already = float(np.mean([r.already_signaling_at_transition for r in runs])) if runs else np.nan
    return AggregateTable(scenario, config, len(runs), mean, mcse, miss, eligible,
                          f_mean, f_se, tp_mean, tp_se, pre_mean, pre_se, already, dict(extras or {}))


def write_rows(path, rows, columns=None):
    """Write dict rows as CSV with 17 significant digits for floats."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])
    return columns


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else format(float(x), ".17g")
    return str(x)

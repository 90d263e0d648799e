"""Command-line entry point: ``bayespc {monitor,calibrate,reproduce,simulate,schema-check}``.

Configs are INI files with a ``[monitor]`` section carrying ``version = 1``.
Exit codes: 0 success, 2 usage, 3 config error, 4 parse error, 5 numerical
failure, 6 calibration target not attained, 7 missing data file.
"""
import argparse
import configparser
import hashlib
import json
import os
import sys

import numpy as np
from scipy.special import logit

from . import experiments as ex
from . import scenarios as sc
from .calibration import (CalibrationResult, bootstrap_block_means, calibrate_paths,
                          calibrate_region_radius, default_grid)
from .conjugate import (BetaAB, BinomialBeta, ExponentialGamma, GaussianKnownVar, GaussianMeanVar,
                        GammaShapeRate, InControlReference, beta_from_mean_sd, beta_phase1_update,
                        gamma_from_mean_sd, gamma_phase1_update)
from .exceptions import DomainError, NumericalFailure
from .gaussian import shrink_covariance
from .metrics import fmt, write_rows
from .particle import (AcceptableRegion, binomial_logit_walk, gaussian_random_walk,
                       multivariate_gaussian_walk, pf_init, pf_step, run_tracking)
from .recoverable import DurationPrior, FilterConfig, filter_init, filter_prune, filter_step, run_batch
from .rng import stream
from .wine import MissingDataError, WineConfig, default_wine_path, load_wine, split_pools

CONFIG_VERSION = 1

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PARSE = 4
EXIT_NUMERICAL = 5
EXIT_UNATTAINED = 6
EXIT_MISSING = 7

RECOVERABLE_COLUMNS = ("t", "p_ic", "signaled", "map_changepoint", "map_regime", "n_states")
TRACKING_COLUMNS = ("t", "p_a", "signaled", "ess", "resampled")
SIMULATE_COLUMNS = ("t", "y", "theta", "regime")
PHASE1_COLUMNS = ("i", "x")
PATH_COLUMNS = ("t", "p")
SCHEMAS = {
    "recoverable": RECOVERABLE_COLUMNS,
    "tracking": TRACKING_COLUMNS,
    "simulate": SIMULATE_COLUMNS,
    "phase1": PHASE1_COLUMNS,
    "path": PATH_COLUMNS,
}

EXACT_FAMILIES = ("exponential-gamma", "binomial-beta", "gaussian")
FAMILIES = EXACT_FAMILIES + ("tracking-pf", "multivariate")
TABLES = ("table1", "table2", "table3", "table4", "table5", "table6", "fig1")


class CliError(Exception):
    code = 1


class ConfigError(CliError):
    code = EXIT_CONFIG


class ParseError(CliError):
    code = EXIT_PARSE


class UsageError(CliError):
    code = EXIT_USAGE


# --- input parsing ------------------------------------------------------------------

def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def iter_rows(lines, delimiter=","):
    """Yield ``(row_number, fields)`` for non-blank lines, row numbers 1-based."""
    for n, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        yield n, [f.strip().strip('"') for f in line.split(delimiter)]


class RowReader:
    """Turns text rows into observations; the first row is a header if any field
    is non-numeric."""

    def __init__(self, delimiter=",", column=None, dim=None):
        self.delimiter = delimiter
        self.column = column
        self.dim = dim
        self.index = None

    def _resolve(self, header):
        if self.dim is not None:
            return None
        col = self.column
        if col is None:
            return header.index("y") if header and "y" in header else 0
        if header and col in header:
            return header.index(col)
        if col.isdigit():
            return int(col)
        raise ParseError(f"column {col!r} not found in header {header}")

    def parse(self, lines):
        first = True
        for n, fields in iter_rows(lines, self.delimiter):
            if first:
                first = False
                if not all(_is_number(f) for f in fields):
                    self.index = self._resolve(fields)
                    continue
                self.index = self._resolve(None)
            try:
                if self.dim is not None:
                    if len(fields) < self.dim:
                        raise ValueError(f"expected at least {self.dim} fields")
                    yield n, np.array([float(f) for f in fields[:self.dim]])
                else:
                    yield n, float(fields[self.index])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"row {n}: cannot parse observation ({exc})") from None


def read_column(path, delimiter=",", column=None):
    with open(path) as fh:
        return np.array([v for _, v in RowReader(delimiter, column).parse(fh)], dtype=float)


def _stdin_lines():
    while True:
        line = sys.stdin.readline()
        if not line:
            return
        yield line


# --- configuration ------------------------------------------------------------------

class MonitorSetup:
    """Everything needed to monitor one stream, built from a config file."""

    def __init__(self, family, delta, filter_config=None, model=None, region=None, particles=None,
                 resample_threshold=0.5, dim=None, pre=None, sampler=None, horizon=200,
                 prune_eps=0.0, digest=""):
        self.family = family
        self.delta = delta
        self.filter_config = filter_config
        self.model = model
        self.region = region
        self.particles = particles
        self.resample_threshold = resample_threshold
        self.dim = dim
        self.pre = pre  # maps raw observation rows to the model scale
        self.sampler = sampler  # (rng) -> (monitor inputs, all-in-control sequence)
        self.horizon = horizon
        self.prune_eps = prune_eps
        self.digest = digest

    @property
    def exact(self):
        return self.family in EXACT_FAMILIES


def _get(cp, section, key, cast=float, default=None, required=False):
    if cp.has_option(section, key):
        raw = cp.get(section, key).strip()
        try:
            if cast is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {cast.__name__}") from None
    if required:
        raise ConfigError(f"missing [{section}] {key}")
    return default


def _path(cp, section, key, base, required=False):
    p = _get(cp, section, key, str, required=required)
    if p is None:
        return None
    return p if os.path.isabs(p) else os.path.join(base, p)


def _beta(cp, section, prefix=""):
    a = _get(cp, section, prefix + "a")
    if a is not None:
        return BetaAB(a, _get(cp, section, prefix + "b", required=True))
    return beta_from_mean_sd(_get(cp, section, prefix + "mean", required=True),
                             _get(cp, section, prefix + "sd", required=True))


def _gamma(cp, section, prefix=""):
    shape = _get(cp, section, prefix + "shape")
    if shape is not None:
        return GammaShapeRate(shape, _get(cp, section, prefix + "rate", required=True))
    return gamma_from_mean_sd(_get(cp, section, prefix + "mean", required=True),
                              _get(cp, section, prefix + "sd", required=True))


def _duration(cp, key):
    mean = _get(cp, "duration", key + "_mean", default=200.0)
    family = _get(cp, "duration", key + "_family", str, "geometric")
    if family == "geometric":
        return DurationPrior.geometric_mean(mean)
    if family == "never":
        return DurationPrior.never()
    raise ConfigError(f"unknown duration family {family!r}")


def _delta(cp, base, override_delta=None, override_record=None):
    literal = _get(cp, "monitor", "delta")
    record = _path(cp, "monitor", "calibration_record", base)
    if literal is not None and record is not None:
        raise ConfigError("give either delta or calibration_record, not both")
    if override_delta is not None:
        literal, record = override_delta, None
    elif override_record is not None:
        literal, record = None, override_record
    if record is not None:
        try:
            return CalibrationResult.load(record).delta
        except (OSError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"cannot read calibration record {record}: {exc}") from None
    if literal is None:
        raise ConfigError("no threshold: set delta or calibration_record")
    if not 0 < literal < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {literal}")
    return float(literal)


def load_setup(path, delta=None, record=None, particles=None, seed=None):
    cp = configparser.ConfigParser()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        cp.read_string(raw.decode("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if not cp.has_section("monitor"):
        raise ConfigError("config needs a [monitor] section")
    version = _get(cp, "monitor", "version", int, required=True)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    family = _get(cp, "monitor", "family", str, required=True)
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    base = os.path.dirname(os.path.abspath(path))
    digest = hashlib.sha256(raw).hexdigest()
    d = _delta(cp, base, delta, record)
    try:
        if family in EXACT_FAMILIES:
            setup = _exact_setup(cp, family, base, d)
        elif family == "tracking-pf":
            setup = _tracking_setup(cp, base, d)
        else:
            setup = _multivariate_setup(cp, base, d, seed)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if particles is not None:
        if setup.exact:
            raise ConfigError("--particles applies only to particle-filter families")
        setup.particles = particles
    setup.digest = digest
    return setup


def _calibration_mode(cp):
    mode = _get(cp, "calibration", "mode", str, "posterior")
    if mode not in ("posterior", "preposterior"):
        raise ConfigError(f"unknown calibration mode {mode!r}")
    return (mode, _get(cp, "calibration", "horizon", int, 200),
            _get(cp, "calibration", "phase1_size", int, 50),
            _get(cp, "calibration", "true_value"))


def _exact_setup(cp, family, base, delta):
    kind = _get(cp, "reference", "kind", str, required=True)
    batch = _get(cp, "observation", "batch_size", int)
    obs_sd = _get(cp, "observation", "obs_sd")
    if family == "binomial-beta" and not batch:
        raise ConfigError("binomial-beta needs [observation] batch_size")
    if family == "gaussian" and not obs_sd:
        raise ConfigError("gaussian needs [observation] obs_sd")

    if family == "exponential-gamma":
        ooc = _gamma(cp, "ooc")
        prior = lambda: _gamma(cp, "reference", "prior_")
        update = gamma_phase1_update
        build = lambda ref: ExponentialGamma(ref, ooc)
        draw_param = lambda g, post: g.gamma(post.shape, 1.0 / post.rate)
        draw_obs = lambda g, theta, n: g.standard_exponential(n) / theta
    elif family == "binomial-beta":
        ooc = _beta(cp, "ooc")
        prior = lambda: _beta(cp, "reference", "prior_")
        update = lambda p, x: beta_phase1_update(p, x, batch)
        build = lambda ref: BinomialBeta(ref, ooc, batch)
        draw_param = lambda g, post: g.beta(post.a, post.b)
        draw_obs = lambda g, theta, n: g.binomial(batch, theta, size=n).astype(float)
    else:
        ooc = GaussianMeanVar(_get(cp, "ooc", "mean", required=True), _get(cp, "ooc", "sd", required=True) ** 2)

        def prior():
            return GaussianMeanVar(_get(cp, "reference", "prior_mean", required=True),
                                   _get(cp, "reference", "prior_sd", required=True) ** 2)

        def update(p, x):
            prec = 1.0 / p.variance + x.size / obs_sd ** 2
            return GaussianMeanVar((p.mean / p.variance + x.sum() / obs_sd ** 2) / prec, 1.0 / prec)

        build = lambda ref: GaussianKnownVar(ref, ooc, obs_sd ** 2)
        draw_param = lambda g, post: g.normal(post.mean, np.sqrt(post.variance))
        draw_obs = lambda g, theta, n: theta + obs_sd * g.standard_normal(n)

    if kind == "point":
        ref = InControlReference.point(_get(cp, "reference", "value", required=True))
    elif kind == "posterior":
        phase1_file = _path(cp, "reference", "phase1_file", base)
        post = prior()
        if phase1_file is not None:
            try:
                post = update(post, read_column(phase1_file, _get(cp, "reference", "delimiter", str, ","),
                                                _get(cp, "reference", "column", str)))
            except OSError as exc:
                raise ConfigError(f"cannot read Phase I file: {exc}") from None
        ref = InControlReference.posterior(post)
    else:
        raise ConfigError(f"unknown reference kind {kind!r}")

    dur_ic, dur_ooc = _duration(cp, "ic"), _duration(cp, "ooc")
    absorbing = _get(cp, "duration", "absorbing", bool, False)
    prune = _get(cp, "monitor", "prune_eps", default=0.0)
    fc = FilterConfig(build(ref), dur_ic, dur_ooc, delta, prune, absorbing)

    mode, horizon, m, true_value = _calibration_mode(cp)

    def sampler(g):
        if mode == "preposterior":
            if kind != "posterior" or true_value is None:
                raise ConfigError("preposterior calibration needs a posterior reference and true_value")
            x = draw_obs(g, true_value, m)
            r = InControlReference.posterior(update(prior(), x))
        else:
            r = ref
        theta = r.value if r.kind == "point" else draw_param(g, r.value)
        return build(r), draw_obs(g, theta, horizon)

    def batch_paths(models, ys):
        return run_batch(models, ys, dur_ic, dur_ooc, absorbing_ooc=absorbing)

    setup = MonitorSetup(family, delta, filter_config=fc, sampler=sampler, horizon=horizon, prune_eps=prune)
    setup.batch_paths = batch_paths
    return setup


def _region(cp, section="tracking"):
    kind = _get(cp, section, "region", str, "interval")
    lo, hi = _get(cp, section, "lower"), _get(cp, section, "upper")
    try:
        if kind == "interval":
            return AcceptableRegion.interval(lo, hi)
        if kind == "below":
            return AcceptableRegion.below(hi)
        if kind == "above":
            return AcceptableRegion.above(lo)
    except TypeError:
        raise ConfigError(f"region {kind!r} needs its limits") from None
    raise ConfigError(f"unknown region {kind!r}")


def _tracking_setup(cp, base, delta):
    if not cp.has_section("tracking"):
        raise ConfigError("tracking-pf needs a [tracking] section")
    model_kind = _get(cp, "tracking", "model", str, "gaussian-walk")
    P = _get(cp, "tracking", "particles", int, 5000)
    thr = _get(cp, "tracking", "resample_threshold", default=0.5)
    state_sd = _get(cp, "tracking", "state_sd", required=True)
    mode, horizon, m, true_value = _calibration_mode(cp)

    if model_kind == "gaussian-walk":
        obs_sd = _get(cp, "tracking", "obs_sd", required=True)
        init_mean = _get(cp, "tracking", "init_mean", default=0.0)
        init_sd = _get(cp, "tracking", "init_sd", default=1.0)
        model = gaussian_random_walk(state_sd, obs_sd, init_mean, init_sd)
        region = _region(cp)

        def sampler(g):
            theta = g.normal(init_mean, init_sd)
            return model, theta + obs_sd * g.standard_normal(horizon)

    elif model_kind == "binomial-logit":
        batch = _get(cp, "tracking", "batch_size", int, required=True)
        prior = BetaAB(_get(cp, "tracking", "prior_a", default=1.0), _get(cp, "tracking", "prior_b", default=99.0))
        phase1_file = _path(cp, "reference", "phase1_file", base) if cp.has_section("reference") else None
        post = prior
        if phase1_file is not None:
            post = beta_phase1_update(prior, read_column(phase1_file), batch)
        model = binomial_logit_walk(state_sd, batch, post)
        upper = _get(cp, "tracking", "upper", required=True)
        if not 0 < upper < 1:
            raise ConfigError("binomial-logit upper limit must be a proportion")
        region = AcceptableRegion.below(float(logit(upper)))

        def sampler(g):
            if mode == "preposterior":
                if true_value is None:
                    raise ConfigError("preposterior calibration needs [calibration] true_value")
                x = g.binomial(batch, true_value, size=m).astype(float)
                p = beta_phase1_update(prior, x, batch)
                mdl = binomial_logit_walk(state_sd, batch, p)
            else:
                p, mdl = post, model
            theta = g.beta(p.a, p.b)
            return mdl, g.binomial(batch, theta, size=horizon).astype(float)
    else:
        raise ConfigError(f"unknown tracking model {model_kind!r}")

    return MonitorSetup("tracking-pf", delta, model=model, region=region, particles=P,
                        resample_threshold=thr, sampler=sampler, horizon=horizon)


def _multivariate_setup(cp, base, delta, seed):
    sec = "multivariate"
    if not cp.has_section(sec):
        raise ConfigError("multivariate needs a [multivariate] section")
    data_file = _path(cp, sec, "data_file", base) or default_wine_path()
    wcfg = WineConfig(
        split_seed=_get(cp, sec, "split_seed", int, 2024),
        rho=_get(cp, sec, "rho", default=0.05),
        c_theta=_get(cp, sec, "c_theta", default=0.2),
        block_size=_get(cp, sec, "block_size", int, 10),
        n_boot=_get(cp, sec, "n_boot", int, 5000),
        quantile=_get(cp, sec, "quantile", default=0.95),
        particles=_get(cp, sec, "particles", int, 5000),
        resample_threshold=_get(cp, sec, "resample_threshold", default=0.5),
    )
    X, q = load_wine(data_file, _get(cp, sec, "delimiter", str, ";"))
    pools, center, raw, (mu, sd) = split_pools(X, q, wcfg)
    cov = shrink_covariance(raw, wcfg.rho)
    radius = _get(cp, sec, "radius")
    if radius is None:
        radius_seed = _get(cp, sec, "radius_seed", int, seed)
        if radius_seed is None:
            raise ConfigError("set [multivariate] radius or radius_seed (or pass --seed)")
        means = bootstrap_block_means(pools["cal"], wcfg.block_size, wcfg.n_boot, stream(radius_seed, "wine-boot"))
        radius = calibrate_region_radius(means, center, cov.inverse, wcfg.quantile)
    b = wcfg.block_size
    model = multivariate_gaussian_walk(cov.shrunk, wcfg.c_theta * cov.shrunk / b, center, cov.shrunk / b)
    region = AcceptableRegion.ellipsoid(center, cov.inverse, radius)
    horizon = _get(cp, "calibration", "horizon", int, 150)
    pool = pools["q7"]

    def sampler(g):
        return model, pool[g.integers(0, pool.shape[0], size=horizon)]

    return MonitorSetup("multivariate", delta, model=model, region=region, particles=wcfg.particles,
                        resample_threshold=wcfg.resample_threshold, dim=X.shape[1],
                        pre=lambda row: (row - mu) / sd, sampler=sampler, horizon=horizon)


# --- commands -----------------------------------------------------------------------

def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _require_seed(args, what):
    if args.seed is None:
        raise UsageError(f"{what} is stochastic: --seed is required")


def cmd_monitor(args):
    setup = load_setup(args.config, args.delta, args.calibration_record, args.particles, args.seed)
    if not setup.exact:
        _require_seed(args, "monitoring with a particle filter")
    reader = RowReader(args.delimiter, args.column, setup.dim)
    if args.input in (None, "-"):
        lines = _stdin_lines()
    else:
        try:
            lines = open(args.input)
        except OSError as exc:
            raise ParseError(f"cannot read input: {exc}") from None
    out, close = _open_out(args.out)
    try:
        if setup.exact:
            out.write(",".join(RECOVERABLE_COLUMNS) + "\n")
            out.flush()
            state = filter_init(setup.filter_config)
            for n, y in reader.parse(lines):
                try:
                    state, rec = filter_step(state, y)
                except DomainError as exc:
                    raise ParseError(f"row {n}: {exc}") from None
                if setup.prune_eps > 0:
                    state = filter_prune(state, setup.prune_eps)
                r, s = rec.map_changepoint
                out.write(",".join(fmt(v) for v in (rec.t, rec.p_ic, rec.signaled, r, s, rec.n_states)) + "\n")
                out.flush()
        else:
            out.write(",".join(TRACKING_COLUMNS) + "\n")
            out.flush()
            ens = pf_init(setup.model, setup.particles, setup.resample_threshold,
                          stream(args.seed, "monitor"))
            for t, (n, y) in enumerate(reader.parse(lines), start=1):
                if setup.pre is not None:
                    y = setup.pre(y)
                ens, p, diag = pf_step(ens, y, setup.region)
                out.write(",".join(fmt(v) for v in (t, p, p < setup.delta, diag.ess, diag.resampled)) + "\n")
                out.flush()
    finally:
        if close:
            out.close()
        if hasattr(lines, "close"):
            lines.close()
    return 0


def parse_grid(spec):
    """``"start:stop:step"``, a comma list, or a single value; ``None`` gives the default grid."""
    if spec is None:
        return default_grid()
    try:
        if ":" in spec:
            start, stop, step = (float(v) for v in spec.split(":"))
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            grid = np.round(start + step * np.arange(n), 10)
        else:
            grid = np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse grid {spec!r}") from None
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
        raise UsageError("grid must be increasing values inside (0, 1)")
    return grid


def parse_target(spec):
    """``"1.0"`` (closest episodes) or ``"band:lo:hi"``; returns ``(target, band)``."""
    try:
        if spec.startswith("band:"):
            lo, hi = (float(v) for v in spec[5:].split(":"))
            if lo > hi:
                raise ValueError
            return 1.0, (lo, hi)
        return float(spec), None
    except ValueError:
        raise UsageError(f"cannot parse target {spec!r}") from None


def calibration_paths(setup, replicates, seed):
    """Stored all-in-control monitoring paths, one named stream per replicate."""
    if setup.exact:
        models, ys = zip(*(setup.sampler(stream(seed, "calibrate", b, "data")) for b in range(replicates)))
        return setup.batch_paths(list(models), np.stack(ys))

    def one(b):
        model, y = setup.sampler(stream(seed, "calibrate", b, "data"))
        return run_tracking(model, setup.region, y, setup.particles,
                            stream(seed, "calibrate", b, "filter"), setup.resample_threshold).p
    return np.stack(ex.parallel_map(one, replicates))


def cmd_calibrate(args):
    _require_seed(args, "calibration")
    grid = parse_grid(args.grid)
    target, band = parse_target(args.target)
    if args.replicates < 1:
        raise UsageError("--replicates must be positive")
    setup = load_setup(args.config, delta=0.5, particles=args.particles, seed=args.seed)
    paths = calibration_paths(setup, args.replicates, args.seed)
    result = calibrate_paths(paths, grid, target, band)
    result.meta = dict(seed=args.seed, config_sha256=setup.digest, horizon=setup.horizon,
                       family=setup.family, particles=setup.particles, software=_version())
    if args.out:
        result.save(args.out)
    print(f"delta={fmt(result.delta)} episodes={fmt(result.achieved_episodes)} mcse={fmt(result.mcse)} "
          f"timepoints={fmt(result.mean_timepoints[result.grid.index(result.delta)])} "
          f"attained={int(result.attained)}")
    if not result.attained:
        print(f"calibration band {band} not attained; nearest miss delta={fmt(result.delta)} "
              f"with {fmt(result.achieved_episodes)} episodes", file=sys.stderr)
        return EXIT_UNATTAINED
    return 0


def _version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


def _write_path(path, p):
    write_rows(path, [dict(t=t + 1, p=v) for t, v in enumerate(p)], PATH_COLUMNS)


def cmd_reproduce(args):
    _require_seed(args, "reproduction")
    if not args.scale > 0:
        raise UsageError("--scale must be positive")
    os.makedirs(args.out, exist_ok=True)
    table = args.table
    files = []
    target = os.path.join(args.out, f"{table}.csv")
    if table == "table1":
        rows = ex.table1(args.scale, args.seed)
    elif table == "table2":
        rows = ex.table2(args.scale, args.seed)
    elif table == "table3":
        rows = ex.table3(args.scale, args.seed)
    elif table == "table4":
        rows = ex.table4(args.scale, args.seed)
    elif table == "table5":
        rows = ex.table5(args.scale, args.seed)
    elif table == "fig1":
        rows = ex.fig1(args.seed)
        fp = os.path.join(args.out, "fig1_path.csv")
        _write_path(fp, [r["p_ic"] for r in rows])
        files.append(fp)
    else:
        from .wine import wine_pipeline
        X, q = load_wine(args.data)
        cfg = WineConfig(particles=args.particles or 5000)
        res = wine_pipeline(X, q, cfg, seed=args.seed, scale=args.scale)
        rows = [res.summary()]
        edges = res.histogram["edges"]
        hp = os.path.join(args.out, "table6_hist.csv")
        write_rows(hp, [dict(bin_lo=edges[i], bin_hi=edges[i + 1], q7=int(res.histogram["q7"][i]),
                             q6=int(res.histogram["q6"][i])) for i in range(edges.size - 1)])
        pp = os.path.join(args.out, "table6_path.csv")
        _write_path(pp, res.representative_path)
        files += [hp, pp]
    write_rows(target, rows)
    files.insert(0, target)
    manifest = dict(table=table, seed=args.seed, scale=args.scale, software=_version(),
                    workers=int(os.environ.get("BAYESPC_WORKERS", "1")),
                    settings_sha256=hashlib.sha256(repr((table, args.scale, args.seed)).encode()).hexdigest(),
                    files=[os.path.basename(f) for f in files])
    with open(os.path.join(args.out, f"{table}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    for f in files:
        print(f)
    return 0


def cmd_simulate(args):
    _require_seed(args, "simulation")
    spec = sc.SCENARIOS.get(args.scenario)
    if spec is None:
        raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(sc.SCENARIOS)}")
    draw = sc.generate_scenario(spec, stream(args.seed, spec.name, 0, "data"))
    out, close = _open_out(args.out)
    try:
        out.write(",".join(SIMULATE_COLUMNS) + "\n")
        for t in range(spec.horizon):
            out.write(",".join(fmt(v) for v in (t + 1, draw.observations[t], draw.latent[t],
                                                int(draw.regimes[t]))) + "\n")
    finally:
        if close:
            out.close()
    if args.phase1_out:
        if draw.phase1 is None:
            raise UsageError(f"scenario {spec.name!r} has no Phase I sample")
        write_rows(args.phase1_out, [dict(i=i + 1, x=x) for i, x in enumerate(draw.phase1)], PHASE1_COLUMNS)
    return 0


def cmd_schema_check(args):
    expected = SCHEMAS[args.kind]
    try:
        with open(args.file) as fh:
            rows = list(iter_rows(fh, ","))
    except OSError as exc:
        raise ParseError(f"cannot read {args.file}: {exc}") from None
    if not rows:
        raise ParseError("empty file: no header")
    _, header = rows[0]
    if tuple(header) != expected:
        raise ParseError(f"header {header} does not match {list(expected)}")
    for n, fields in rows[1:]:
        if len(fields) != len(expected):
            raise ParseError(f"row {n}: expected {len(expected)} fields, got {len(fields)}")
        bad = [f for f in fields if not _is_number(f)]
        if bad:
            raise ParseError(f"row {n}: non-numeric value {bad[0]!r}")
    print(f"ok: {len(rows) - 1} rows")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="bayespc", description="Sequential Bayesian process monitoring")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("monitor", help="monitor a stream (file or stdin) and write one row per observation")
    m.add_argument("--config", required=True)
    m.add_argument("input", nargs="?", default="-")
    m.add_argument("--out")
    m.add_argument("--seed", type=int)
    m.add_argument("--delta", type=float)
    m.add_argument("--calibration-record")
    m.add_argument("--particles", type=int)
    m.add_argument("--delimiter", default=",")
    m.add_argument("--column")
    m.set_defaults(func=cmd_monitor)

    c = sub.add_parser("calibrate", help="choose the signalling threshold from all-in-control paths")
    c.add_argument("--config", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--replicates", type=int, default=1000)
    c.add_argument("--grid")
    c.add_argument("--target", default="1.0")
    c.add_argument("--particles", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("reproduce", help="rerun a simulation study and write its table")
    r.add_argument("table", choices=TABLES)
    r.add_argument("--seed", type=int)
    r.add_argument("--scale", type=float, default=1.0)
    r.add_argument("--out", default=".")
    r.add_argument("--data", help="wine data file (table6)")
    r.add_argument("--particles", type=int)
    r.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("simulate", help="write one draw of a named scenario")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--phase1-out")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("schema-check", help="validate the column layout of an output CSV")
    k.add_argument("file")
    k.add_argument("--kind", choices=sorted(SCHEMAS), required=True)
    k.set_defaults(func=cmd_schema_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"bayespc: {exc}", file=sys.stderr)
        return exc.code
    except MissingDataError as exc:
        print(f"bayespc: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalFailure as exc:
        print(f"bayespc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as exc:
        print(f"bayespc: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

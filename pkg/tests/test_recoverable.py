import math

import numpy as np
import pytest

from bayespc.conjugate import (BetaAB, BinomialBeta, ExponentialGamma, GammaShapeRate,
                               InControlReference, beta_from_mean_sd, gamma_from_mean_sd,
                               gamma_phase1_update, log_pred_exponential_gamma)
from bayespc.exceptions import DomainError, NumericalFailure
from bayespc.recoverable import (DurationPrior, FilterConfig, filter_init, filter_prune, filter_step,
                                 run_batch, run_stream)
from bayespc.rng import stream
from oracles import (beta_binomial_segment, brute_force_posterior, exp_gamma_segment,
                     single_change_posterior)


def _posterior(state):
    return {(int(r), int(s)): math.exp(m) for r, s, m in zip(state.r, state.s, state.log_mass)
            if np.isfinite(m)}


def _run(config, ys):
    state = filter_init(config)
    for y in ys:
        state, _ = filter_step(state, y)
    return state


def _exp_config(p0=0.1, p1=0.3, reference=None, absorbing=False):
    ref = reference or InControlReference.posterior(GammaShapeRate(11.0, 1.1))
    return FilterConfig(ExponentialGamma(ref, GammaShapeRate(16.0, 0.4)),
                        DurationPrior.geometric(p0), DurationPrior.geometric(p1), absorbing_ooc=absorbing)


def _exp_oracle(config, ys, absorbing=False):
    ooc = config.model.ooc_prior
    ref = config.model.reference
    if ref.kind == "point":
        ic = lambda y: math.log(ref.value) - ref.value * y
    else:
        ic = lambda y: log_pred_exponential_gamma(ref.value, y)
    return brute_force_posterior(list(ys), ic, lambda seg: exp_gamma_segment(ooc.shape, ooc.rate, seg),
                                 lambda d: float(config.dur_ic.hazard(d)),
                                 lambda d: float(config.dur_ooc.hazard(d)), absorbing)


def assert_matches(post, oracle, tol=1e-9):
    keys = set(post) | set(oracle)
    for k in keys:
        assert abs(post.get(k, 0.0) - oracle.get(k, 0.0)) < tol, k


@pytest.mark.parametrize("T", [1, 2, 3, 5, 6])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exponential_gamma_matches_enumeration(T, seed):
    g = stream(seed, "oracle-exp", T)
    ys = g.exponential(1 / g.choice([10.0, 40.0]), size=T)
    cfg = _exp_config()
    assert_matches(_posterior(_run(cfg, ys)), _exp_oracle(cfg, ys))


def test_point_reference_matches_enumeration():
    ys = [0.1, 0.02, 0.01, 0.3, 0.05, 0.02]
    cfg = _exp_config(reference=InControlReference.point(10.0))
    assert_matches(_posterior(_run(cfg, ys)), _exp_oracle(cfg, ys))


def test_custom_hazards_match_enumeration():
    ys = [0.1, 0.02, 0.01, 0.3, 0.05, 0.02]
    ref = InControlReference.posterior(GammaShapeRate(11.0, 1.1))
    cfg = FilterConfig(ExponentialGamma(ref, GammaShapeRate(16.0, 0.4)),
                       DurationPrior.from_hazards([0.05, 0.2, 0.4]),
                       DurationPrior.from_pmf([0.1, 0.3, 0.2, 0.4]))
    assert_matches(_posterior(_run(cfg, ys)), _exp_oracle(cfg, ys))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_binomial_beta_matches_enumeration(seed):
    N = 500
    ooc = beta_from_mean_sd(0.02, 0.01)
    post = BetaAB(6.0, 594.0)
    cfg = FilterConfig(BinomialBeta(InControlReference.posterior(post), ooc, N),
                       DurationPrior.geometric(0.05), DurationPrior.geometric(0.2))
    ys = stream(seed, "oracle-bin").binomial(N, [0.01, 0.02, 0.03, 0.01, 0.015, 0.02])
    oracle = brute_force_posterior(
        list(ys), lambda y: beta_binomial_segment(post.a, post.b, [y], N),
        lambda seg: beta_binomial_segment(ooc.a, ooc.b, seg, N),
        lambda d: 0.05, lambda d: 0.2)
    assert_matches(_posterior(_run(cfg, ys)), oracle)


def test_first_step_and_state_count():
    cfg = _exp_config()
    state = filter_init(cfg)
    assert state.t == 0 and state.r.size == 0
    state, rec = filter_step(state, 0.1)
    assert rec.p_ic == 1.0 and rec.n_states == 1 and rec.map_changepoint == (0, 0)
    for t in range(2, 40):
        state, rec = filter_step(state, 0.05)
        assert rec.n_states == 2 * t - 1
        assert not np.any((state.r == 0) & (state.s == 1))


def test_normalisation_and_forbidden_state_randomised():
    g = stream(11, "norm")
    steps = 0
    while steps < 2000:
        p0, p1 = g.uniform(0.001, 0.5, size=2)
        cfg = _exp_config(p0, p1)
        state = filter_init(cfg)
        for _ in range(int(g.integers(5, 60))):
            state, rec = filter_step(state, g.exponential(1 / g.choice([5.0, 10.0, 40.0])))
            steps += 1
            assert abs(np.exp(state.log_mass).sum() - 1) < 1e-10
            forbidden = (state.r == 0) & (state.s == 1)
            assert not np.any(np.exp(state.log_mass[forbidden]) > 0)
            assert 0 <= rec.p_ic <= 1
            assert rec.signaled == (rec.p_ic < cfg.delta)


def test_never_leaving_in_control():
    ref = InControlReference.posterior(GammaShapeRate(11.0, 1.1))
    cfg = FilterConfig(ExponentialGamma(ref, GammaShapeRate(16.0, 0.4)), DurationPrior.never(),
                       DurationPrior.geometric(0.1))
    recs = run_stream(cfg, stream(0, "never").exponential(0.02, size=50))
    assert all(r.p_ic == 1.0 for r in recs)


def test_absorbing_matches_single_change_formula():
    p = 0.02
    cfg = _exp_config(p0=p, absorbing=True)
    ref, ooc = cfg.model.reference.value, cfg.model.ooc_prior
    ys = np.r_[stream(4, "abs").exponential(0.1, 30), stream(5, "abs").exponential(0.025, 20)]
    state = filter_init(cfg)
    for t, y in enumerate(ys, start=1):
        state, rec = filter_step(state, y)
        oracle = single_change_posterior(list(ys[:t]), lambda v: log_pred_exponential_gamma(ref, v),
                                         lambda seg: exp_gamma_segment(ooc.shape, ooc.rate, seg), p)
        assert abs(rec.p_ic - oracle[0]) < 1e-9
        assert state.r.size == t


def test_absorbing_oracle_for_short_series_matches_enumeration():
    cfg = _exp_config(p0=0.1, absorbing=True)
    ys = [0.1, 0.03, 0.01, 0.02, 0.2]
    assert_matches(_posterior(_run(cfg, ys)), _exp_oracle(cfg, ys, absorbing=True))


def test_domain_errors():
    cfg = _exp_config()
    state, _ = filter_step(filter_init(cfg), 0.1)
    with pytest.raises(DomainError):
        filter_step(state, -0.5)
    with pytest.raises(DomainError):
        FilterConfig(cfg.model, cfg.dur_ic, cfg.dur_ooc, delta=1.0)
    with pytest.raises(DomainError):
        FilterConfig(cfg.model, cfg.dur_ic, cfg.dur_ooc, prune_eps=0.5)
    bcfg = FilterConfig(BinomialBeta(InControlReference.point(0.01), BetaAB(4, 196), 500),
                        DurationPrior.geometric(0.01), DurationPrior.geometric(0.01))
    state, _ = filter_step(filter_init(bcfg), 3)
    with pytest.raises(DomainError):
        filter_step(state, 501)


class _ZeroDensity:
    """Model under which the second observation is impossible in every regime."""

    def check(self, y):
        return y

    def log_pred_ic(self, y):
        return 0.0 if y == 0 else -np.inf

    def log_pred_ooc(self, count, total, y):
        return np.full(np.shape(count), 0.0 if y == 0 else -np.inf)


def test_total_underflow_is_reported():
    cfg = FilterConfig(_ZeroDensity(), DurationPrior.geometric(0.5), DurationPrior.geometric(0.5))
    state, _ = filter_step(filter_init(cfg), 0.0)
    state, _ = filter_step(state, 0.0)
    with pytest.raises(NumericalFailure):
        filter_step(state, 1.0)


def test_prune_example():
    cfg = _exp_config()
    state = _run(cfg, [0.1, 0.1])
    state.r = np.array([0, 1, 1])
    state.s = np.array([0, 0, 1], dtype=np.int8)
    state.log_mass = np.log([0.7, 0.2999, 0.0001])
    state.count = np.zeros(3)
    state.total = np.zeros(3)
    filter_prune(state, 0.001)
    assert state.r.size == 2
    assert np.exp(state.log_mass) == pytest.approx([0.7 / 0.9999, 0.2999 / 0.9999], rel=1e-12)
    with pytest.raises(DomainError):
        filter_prune(state, 0.02)


def test_prune_zero_is_identity_and_small_eps_is_close():
    ys = stream(8, "prune").exponential(0.1, size=200)
    ys[60:100] = stream(9, "prune").exponential(0.025, size=40)
    base = _exp_config(1 / 200, 1 / 200)
    exact = np.array([r.p_ic for r in run_stream(base, ys)])
    s = _run(base, ys)
    before = s.log_mass.copy()
    assert np.array_equal(filter_prune(s, 0.0).log_mass, before)
    pruned = FilterConfig(base.model, base.dur_ic, base.dur_ooc, prune_eps=1e-8)
    approx = np.array([r.p_ic for r in run_stream(pruned, ys)])
    assert np.max(np.abs(approx - exact)) < 1e-5


def test_geometric_hazard_constant():
    d = DurationPrior.geometric(0.3)
    assert np.all(d.hazard(np.arange(1, 500)) == 0.3)
    assert DurationPrior.geometric_mean(200).p == 1 / 200
    with pytest.raises(DomainError):
        DurationPrior.geometric(0.0)


def test_empty_stream():
    assert run_stream(_exp_config(), []) == []


def test_signal_is_strict():
    state = _run(_exp_config(), [0.1, 0.02, 0.01, 0.02])
    p = state.p_ic
    assert 0 < p < 1
    m = state.config
    state.config = FilterConfig(m.model, m.dur_ic, m.dur_ooc, delta=p)
    assert not state.record().signaled
    state.config = FilterConfig(m.model, m.dur_ic, m.dur_ooc, delta=np.nextafter(p, 1))
    assert state.record().signaled


def test_batch_runner_matches_stream():
    g = stream(21, "batch")
    prior = gamma_from_mean_sd(10, 3)
    ooc = gamma_from_mean_sd(40, 10)
    dur = DurationPrior.geometric(1 / 200)
    Y = g.exponential(0.1, size=(6, 80))
    Y[:, 30:50] = g.exponential(0.025, size=(6, 20))
    models = [ExponentialGamma(InControlReference.posterior(gamma_phase1_update(prior, g.exponential(0.1, 50))), ooc)
              for _ in range(6)]
    P = run_batch(models, Y, dur, dur)
    for b in range(6):
        ref = np.array([r.p_ic for r in run_stream(FilterConfig(models[b], dur, dur), Y[b])])
        assert np.max(np.abs(P[b] - ref)) < 1e-12
    Pa = run_batch(models, Y, dur, dur, absorbing_ooc=True)
    ref = [r.p_ic for r in run_stream(FilterConfig(models[0], dur, dur, absorbing_ooc=True), Y[0])]
    assert np.max(np.abs(Pa[0] - ref)) < 1e-12

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bayespc.conjugate import (BetaAB, Binomial, BinomialBeta, Exponential, ExponentialGamma,
                               GammaShapeRate, GaussianMeanVar, InControlReference,
                               beta_from_mean_sd, beta_phase1_update, gamma_from_mean_sd,
                               gamma_phase1_update, log_pred_binomial_beta,
                               log_pred_exponential_gamma, log_pred_gaussian, sample)
from bayespc.exceptions import DomainError
from bayespc.rng import stream
from oracles import beta_binomial_lgamma, lomax_by_quadrature


def test_gamma_from_mean_sd_baseline():
    g = gamma_from_mean_sd(10, 3)
    assert g.shape == pytest.approx(100 / 9, rel=1e-15)
    assert g.rate == pytest.approx(10 / 9, rel=1e-15)
    assert gamma_from_mean_sd(1, 1) == GammaShapeRate(1.0, 1.0)
    ooc = gamma_from_mean_sd(40, 10)
    assert (ooc.shape, ooc.rate) == pytest.approx((16.0, 0.4))


@given(st.floats(0.01, 1e4), st.floats(0.01, 1e4))
def test_gamma_round_trip(mu, sigma):
    g = gamma_from_mean_sd(mu, sigma)
    assert g.mean == pytest.approx(mu, rel=1e-12)
    assert g.sd == pytest.approx(sigma, rel=1e-12)


@pytest.mark.parametrize("mu, sigma", [(0, 1), (1, 0), (-1, 2), (float("nan"), 1)])
def test_gamma_from_mean_sd_rejects(mu, sigma):
    with pytest.raises(DomainError):
        gamma_from_mean_sd(mu, sigma)


def test_gamma_phase1_update():
    assert gamma_phase1_update(GammaShapeRate(1, 1), []) == GammaShapeRate(1, 1)
    assert gamma_phase1_update(GammaShapeRate(2, 3), [0.5, 1.5]) == GammaShapeRate(4, 5)
    with pytest.raises(DomainError):
        gamma_phase1_update(GammaShapeRate(2, 3), [0.5, -1.0])


def test_gamma_phase1_posterior_near_truth():
    x = stream(3, "phase1").exponential(0.1, size=50)
    post = gamma_phase1_update(gamma_from_mean_sd(10, 3), x)
    assert abs(post.mean - 10) < 3 * post.sd


def test_beta_phase1_update():
    assert beta_phase1_update(BetaAB(1, 99), [], 500) == BetaAB(1, 99)
    assert beta_phase1_update(BetaAB(1, 99), [5, 3], 500) == BetaAB(9, 1091)
    with pytest.raises(DomainError):
        beta_phase1_update(BetaAB(1, 99), [501], 500)
    x = stream(3, "phase1").binomial(500, 0.01, size=50)
    post = beta_phase1_update(BetaAB(1, 99), x, 500)
    assert abs(post.mean - 0.01) < 3 * post.sd


@given(st.lists(st.floats(0.01, 100), max_size=6), st.lists(st.floats(0.01, 100), max_size=6))
def test_updates_commute_with_batching(xs, zs):
    prior = GammaShapeRate(2.0, 3.0)
    joint = gamma_phase1_update(prior, xs + zs)
    seq = gamma_phase1_update(gamma_phase1_update(prior, xs), zs)
    assert joint.shape == seq.shape
    assert joint.rate == pytest.approx(seq.rate, rel=1e-12)


def test_beta_from_mean_sd():
    b = beta_from_mean_sd(0.02, 0.01)
    assert b.mean == pytest.approx(0.02)
    assert b.sd == pytest.approx(0.01)


def test_lomax_closed_forms():
    assert log_pred_exponential_gamma(GammaShapeRate(2, 1), 1.0) == pytest.approx(math.log(0.25))
    assert log_pred_exponential_gamma(GammaShapeRate(1, 1), 1e-12) == pytest.approx(0.0, abs=1e-11)
    for y in (0.0, -1.0):
        with pytest.raises(DomainError):
            log_pred_exponential_gamma(GammaShapeRate(2, 1), y)


def test_lomax_matches_quadrature_oracle():
    g = gamma_from_mean_sd(10, 3)
    for y in (0.01, 0.1, 0.5):
        expected = lomax_by_quadrature(g.shape, g.rate, y)
        assert math.exp(log_pred_exponential_gamma(g, y)) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("shape, rate", [(100 / 9, 10 / 9), (16.0, 0.4), (1.5, 2.0), (60.0, 6.0)])
def test_lomax_normalises(shape, rate):
    g = GammaShapeRate(shape, rate)
    val, _ = integrate.quad(lambda y: math.exp(log_pred_exponential_gamma(g, y)), 0, math.inf,
                            epsabs=1e-12, limit=200)
    assert abs(val - 1) < 1e-6


def test_beta_binomial_closed_forms():
    assert log_pred_binomial_beta(BetaAB(1, 1), 0, 1) == pytest.approx(math.log(0.5))
    assert log_pred_binomial_beta(BetaAB(1, 1), 1, 2) == pytest.approx(math.log(1 / 3))
    assert log_pred_binomial_beta(BetaAB(1, 99), 5, 500) == pytest.approx(
        beta_binomial_lgamma(1, 99, 5, 500), abs=1e-10)
    for y in (-1, 501):
        with pytest.raises(DomainError):
            log_pred_binomial_beta(BetaAB(1, 99), y, 500)


@pytest.mark.parametrize("a, b, n", [(1, 99, 500), (0.5, 0.5, 1000), (3.0, 147.0, 1000), (9, 1091, 7)])
def test_beta_binomial_normalises(a, b, n):
    y = np.arange(n + 1)
    total = np.exp(log_pred_binomial_beta(BetaAB(a, b), y, n)).sum()
    assert abs(total - 1) < 1e-9


def test_gaussian_predictive():
    assert log_pred_gaussian(GaussianMeanVar(0, 0), 1.0, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))
    assert log_pred_gaussian(GaussianMeanVar(0, 1), 1.0, 0.0) == pytest.approx(-0.5 * math.log(4 * math.pi))
    expected = -0.5 * math.log(2 * math.pi) - 0.5
    assert log_pred_gaussian(GaussianMeanVar(2, 0.25), 0.75, 3.0) == pytest.approx(expected, rel=1e-14)


def test_point_reference_uses_likelihood():
    m = ExponentialGamma(InControlReference.point(10.0), gamma_from_mean_sd(40, 10))
    assert m.log_pred_ic(0.2) == pytest.approx(math.log(10) - 2.0)
    b = BinomialBeta(InControlReference.point(0.01), BetaAB(4, 196), 500)
    expected = math.lgamma(501) - math.lgamma(6) - math.lgamma(496) + 5 * math.log(0.01) + 495 * math.log(0.99)
    assert b.log_pred_ic(5) == pytest.approx(expected)


def test_sample_is_reproducible_and_sane():
    assert len(sample(GammaShapeRate(1, 1), 0, stream(1, "s"))) == 0
    a = sample(Binomial(500, 0.01), 100000, stream(1, "s"))
    b = sample(Binomial(500, 0.01), 100000, stream(1, "s"))
    assert np.array_equal(a, b)
    se = math.sqrt(500 * 0.01 * 0.99 / 1e5)
    assert abs(a.mean() - 5) < 3 * se
    e = sample(Exponential(10), 100000, stream(2, "s"))
    assert abs(e.mean() - 0.1) < 3 * 0.1 / math.sqrt(1e5)
    assert np.all(e > 0)


@settings(max_examples=50)
@given(st.floats(0.5, 50), st.floats(0.05, 20), st.floats(1e-6, 1e3))
def test_log_predictive_is_finite(shape, rate, y):
    v = log_pred_exponential_gamma(GammaShapeRate(shape, rate), y)
    assert np.isfinite(v) and np.isfinite(math.exp(v))

"""scikit-learn style wrappers: ``fit`` on Phase I data, ``transform`` a
monitored sequence into posterior probabilities, ``predict`` signals."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .conjugate import (BetaAB, BinomialBeta, ExponentialGamma, GaussianKnownVar, GaussianMeanVar,
                        InControlReference, beta_from_mean_sd, beta_phase1_update,
                        gamma_from_mean_sd, gamma_phase1_update)
from .exceptions import DomainError
from .particle import AcceptableRegion, binomial_logit_walk, gaussian_random_walk, run_tracking
from .recoverable import DurationPrior, FilterConfig, filter_init, filter_prune, filter_step
from .rng import stream


def _sequence(X, name="X"):
    """Accept a 1-D sequence or a single column; returns a float vector."""
    arr = check_array(X, ensure_2d=False, dtype=float, ensure_min_samples=0, input_name=name)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must be one observation per row, got shape {arr.shape}")
        arr = arr[:, 0]
    return arr


class RecoverableMonitor(TransformerMixin, BaseEstimator):
    """Exact recoverable-regime monitor.

    ``fit`` learns the in-control reference from a Phase I sample (or uses
    the known value ``theta0``); ``transform`` returns ``P(in control | y_1:t)``
    for each observation of a monitored sequence, starting afresh each call.

    family : "exponential-gamma", "binomial-beta" or "gaussian"
    ic_prior, ooc_prior : (mean, sd) pairs for the parameter priors
    """

    def __init__(self, family="exponential-gamma", ic_prior=(10.0, 3.0), ooc_prior=(40.0, 10.0),
                 theta0=None, batch_size=None, obs_sd=None, mean_duration_ic=200.0,
                 mean_duration_ooc=200.0, delta=0.5, prune_eps=0.0, absorbing=False):
        self.family = family
        self.ic_prior = ic_prior
        self.ooc_prior = ooc_prior
        self.theta0 = theta0
        self.batch_size = batch_size
        self.obs_sd = obs_sd
        self.mean_duration_ic = mean_duration_ic
        self.mean_duration_ooc = mean_duration_ooc
        self.delta = delta
        self.prune_eps = prune_eps
        self.absorbing = absorbing

    def _reference(self, x):
        fam = self.family
        if self.theta0 is not None:
            return InControlReference.point(float(self.theta0))
        if x is None or x.size == 0:
            raise DomainError("need Phase I data or a known theta0")
        if fam == "exponential-gamma":
            return InControlReference.posterior(gamma_phase1_update(gamma_from_mean_sd(*self.ic_prior), x))
        if fam == "binomial-beta":
            prior = beta_from_mean_sd(*self.ic_prior)
            return InControlReference.posterior(beta_phase1_update(prior, x, self.batch_size))
        if fam == "gaussian":
            m0, s0 = self.ic_prior
            prec = 1.0 / s0 ** 2 + x.size / self.obs_sd ** 2
            mean = (m0 / s0 ** 2 + x.sum() / self.obs_sd ** 2) / prec
            return InControlReference.posterior(GaussianMeanVar(mean, 1.0 / prec))
        raise DomainError(f"unknown family {fam!r}")

    def _model(self, ref):
        fam = self.family
        if fam == "exponential-gamma":
            return ExponentialGamma(ref, gamma_from_mean_sd(*self.ooc_prior))
        if fam == "binomial-beta":
            if self.batch_size is None:
                raise DomainError("binomial-beta needs batch_size")
            return BinomialBeta(ref, beta_from_mean_sd(*self.ooc_prior), int(self.batch_size))
        if fam == "gaussian":
            if self.obs_sd is None:
                raise DomainError("gaussian needs obs_sd")
            m1, s1 = self.ooc_prior
            return GaussianKnownVar(ref, GaussianMeanVar(m1, s1 ** 2), self.obs_sd ** 2)
        raise DomainError(f"unknown family {fam!r}")

    def fit(self, X=None, y=None):
        x = None if X is None else _sequence(X)
        if self.family == "binomial-beta" and self.batch_size is None:
            raise DomainError("binomial-beta needs batch_size")
        if self.family == "gaussian" and self.obs_sd is None:
            raise DomainError("gaussian needs obs_sd")
        self.reference_ = self._reference(x)
        dur_ooc = DurationPrior.geometric_mean(self.mean_duration_ooc)
        self.config_ = FilterConfig(self._model(self.reference_),
                                    DurationPrior.geometric_mean(self.mean_duration_ic), dur_ooc,
                                    self.delta, self.prune_eps, self.absorbing)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        y = _sequence(X)
        state = filter_init(self.config_)
        out = np.empty(y.size)
        self.records_ = []
        for t, obs in enumerate(y):
            state, rec = filter_step(state, obs)
            if self.prune_eps > 0:
                state = filter_prune(state, self.prune_eps)
            out[t] = rec.p_ic
            self.records_.append(rec)
        return out

    def predict(self, X):
        return self.transform(X) < self.delta


class ParticleTracker(TransformerMixin, BaseEstimator):
    """Bootstrap particle filter for ``P(theta_t in A | y_1:t)``.

    family "gaussian": scalar random walk with Gaussian noise and interval
    region ``[lower, upper]``. family "binomial-logit": logit random walk for
    a defect proportion, initialised from the Beta posterior learnt by
    ``fit``; ``upper`` is the largest acceptable proportion.
    ``random_state`` must be an integer so runs are reproducible.
    """

    def __init__(self, family="gaussian", state_sd=0.08, obs_sd=0.15, init_mean=0.0, init_sd=0.2,
                 lower=-0.5, upper=0.5, batch_size=None, prior=(1.0, 99.0), particles=5000,
                 resample_threshold=0.5, delta=0.5, random_state=None):
        self.family = family
        self.state_sd = state_sd
        self.obs_sd = obs_sd
        self.init_mean = init_mean
        self.init_sd = init_sd
        self.lower = lower
        self.upper = upper
        self.batch_size = batch_size
        self.prior = prior
        self.particles = particles
        self.resample_threshold = resample_threshold
        self.delta = delta
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.random_state is None:
            raise DomainError("random_state must be set explicitly")
        if self.family == "gaussian":
            self.model_ = gaussian_random_walk(self.state_sd, self.obs_sd, self.init_mean, self.init_sd)
            self.region_ = AcceptableRegion.interval(self.lower, self.upper)
        elif self.family == "binomial-logit":
            if self.batch_size is None:
                raise DomainError("binomial-logit needs batch_size")
            post = BetaAB(*self.prior)
            if X is not None:
                post = beta_phase1_update(post, _sequence(X), self.batch_size)
            self.posterior_ = post
            self.model_ = binomial_logit_walk(self.state_sd, int(self.batch_size), post)
            self.region_ = AcceptableRegion.below(np.log(self.upper / (1.0 - self.upper)))
        else:
            raise DomainError(f"unknown family {self.family!r}")
        self.n_calls_ = 0
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        y = _sequence(X)
        rng = stream(self.random_state, "tracker", self.n_calls_)
        self.n_calls_ += 1
        run = run_tracking(self.model_, self.region_, y, int(self.particles), rng, self.resample_threshold)
        self.ess_, self.resampled_, self.means_ = run.ess, run.resampled, run.means
        return run.p

    def predict(self, X):
        return self.transform(X) < self.delta

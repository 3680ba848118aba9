import math
from types import SimpleNamespace

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from zipmix.conjugate import (PosteriorPhi, _eb_posterior, empirical_bayes_mixture,
                              empirical_bayes_zipm, phi_credible_interval, phi_logdensity)
from zipmix.em_mixture import fit_em_mixture
from zipmix.em_zipm import ZipmResponsibilities, estep_zipm
from zipmix.errors import DomainError, ImproperPosterior, MeanUndefined
from zipmix.model import DataSet, ExposureGrid, ModelParams, PriorSpec
from zipmix.simulate import SimConfig, simulate_dataset

from oracles import enumerate_zipm_posteriors


def _quad_moment(p, k):
    f = lambda th: th**k * mp.e ** mp.mpf(float(phi_logdensity(float(th), p)))  # noqa: E731
    return float(mp.quad(f, [0, 0.1, 1, 10, 100, mp.inf]))


# ------------------------------------------------------------------ density

def test_density_normalizes():
    assert abs(_quad_moment(PosteriorPhi(2, 3, 10, 0.4), 0) - 1.0) < 1e-8


@pytest.mark.parametrize("abkr", [(2, 3, 10, 0.4), (5.5, 7.2, 40, 0.3), (1.2, 2.5, 3, 0.7)])
def test_mean_matches_quadrature(abkr):
    p = PosteriorPhi(*abkr)
    assert math.isclose(_quad_moment(p, 1), p.mean(), rel_tol=1e-8)


def test_variance_matches_quadrature():
    p = PosteriorPhi(4, 6, 20, 0.4)
    var = _quad_moment(p, 2) - p.mean() ** 2
    assert math.isclose(var, p.variance(), rel_tol=1e-7)


def test_density_is_scaled_beta_prime():
    p = PosteriorPhi(3.3, 4.1, 25.0, 0.35)
    th = np.array([0.01, 0.5, 1.0, 3.0, 40.0])
    s = p.B / p.A
    ref = stats.betaprime(p.a, p.b, scale=s).logpdf(th)
    assert np.allclose(p.logpdf(th), ref, rtol=1e-12)


def test_reciprocal_symmetry_equal_shapes():
    # A theta / B is beta-prime(a, a), whose law is invariant under x -> 1/x
    p = PosteriorPhi(3.0, 3.0, 10.0, 0.5)
    c = p.B / p.A
    for th in (0.05, 0.4, 1.0, 2.2, 9.0):
        dual = c * c / th
        # density of c^2 / Theta at th equals density of Theta at th
        assert math.isclose(float(p.pdf(dual)) * dual / th, float(p.pdf(th)), rel_tol=1e-12)


def test_mean_undefined():
    with pytest.raises(MeanUndefined):
        PosteriorPhi(2, 1, 10, 0.5).mean()


def test_invalid_indices():
    with pytest.raises(DomainError):
        PosteriorPhi(0, 1, 10, 0.5)
    with pytest.raises(DomainError):
        PosteriorPhi(1, 1, 10, 1.0)


# ------------------------------------------------------------------ credible intervals

def test_level_zero_is_the_median():
    p = PosteriorPhi(2.5, 3.5, 12, 0.4)
    iv = phi_credible_interval(p, 0.0)
    assert iv.lower == iv.upper == iv.point == pytest.approx(p.median(), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 30), st.floats(0.3, 30), st.floats(0.5, 500), st.floats(0.05, 0.95),
       st.floats(0.5, 0.99))
def test_interval_has_requested_mass(a, b, kt, r, level):
    p = PosteriorPhi(a, b, kt, r)
    iv = phi_credible_interval(p, level)
    assert abs(float(p.cdf(iv.upper) - p.cdf(iv.lower)) - level) < 1e-6


def test_interval_mass_by_quadrature():
    p = PosteriorPhi(4, 5, 10, 0.4)
    iv = phi_credible_interval(p, 0.9)
    mass = mp.quad(lambda th: mp.e ** mp.mpf(float(p.logpdf(float(th)))), [iv.lower, iv.upper])
    assert abs(float(mass) - 0.9) < 1e-8


def test_interval_brackets_mean():
    for a, b in [(3, 4), (10, 12), (6, 2.5)]:
        p = PosteriorPhi(a, b, 20, 0.3)
        iv = phi_credible_interval(p, 0.95)
        assert iv.lower < p.mean() < iv.upper and iv.point == p.mean()


def test_point_falls_back_to_median():
    p = PosteriorPhi(2, 0.8, 10, 0.5)
    assert phi_credible_interval(p, 0.95).point == p.median()


# ------------------------------------------------------------------ empirical Bayes

def test_eb_binary_imputation_ratio():
    m = np.array([[5, 1, 2, 7], [6, 2, 1, 8]])
    y = np.array([1.0, 0, 0, 1])
    g = ExposureGrid(np.array([1.0, 1.0]), 4)
    res = empirical_bayes_mixture(DataSet(n=m), g, SimpleNamespace(yhat=y),
                                  PriorSpec(alpha=0, beta=0, delta=1), improper=True)
    r, Kt = 0.5, g.K * g.tbar
    mS, mT = 26, 6
    # exact normaliser: the plug-in ratio carries the factor (Kt(1-r)+1)/(Kt(1-r))
    assert math.isclose(res.estimate, (Kt * (1 - r) + 1) * mS / (Kt * r * mT), rel_tol=1e-14)
    assert math.isclose(res.estimate / ((1 - r) * mS / (r * mT)), 1 + 1 / (Kt * (1 - r)), rel_tol=1e-14)


def test_eb_improper_requirements():
    m = DataSet(n=[[1, 2], [3, 4]])
    g = ExposureGrid.uniform(2, 2)
    with pytest.raises(ImproperPosterior):
        empirical_bayes_mixture(m, g, SimpleNamespace(yhat=np.zeros(2)),
                                PriorSpec(alpha=0, beta=0, delta=1), improper=True)
    with pytest.raises(DomainError):
        empirical_bayes_mixture(m, g, SimpleNamespace(yhat=np.full(2, 0.3)), PriorSpec(alpha=0, beta=0))


def test_eb_zipm_reduces_to_mixture():
    m = np.array([[5, 1, 2, 7], [6, 2, 1, 8]])
    y = np.array([1.0, 0, 0, 1])
    g = ExposureGrid(np.array([0.5, 1.5]), 4)
    prior = PriorSpec(alpha=1.5, beta=2.0, delta=1.0)
    a = empirical_bayes_mixture(DataSet(n=m), g, SimpleNamespace(yhat=y), prior)
    resp = ZipmResponsibilities(y, np.ones((2, 4)), np.tile(y, (2, 1)))
    b = empirical_bayes_zipm(DataSet(n=m), g, None, resp, prior)
    assert a.posterior == b.posterior and a.estimate == b.estimate


def test_eb_zipm_count_identity():
    rng = np.random.default_rng(3)
    n = rng.poisson(2.0, (3, 6)) * (rng.random((3, 6)) < 0.7)
    g = ExposureGrid(np.array([0.5, 1.0, 2.0]), 6)
    resp = estep_zipm(DataSet(n=n), g, ModelParams(0.3, 0.7, 1.0, 3.0))
    res = empirical_bayes_zipm(DataSet(n=n), g, None, resp, PriorSpec(alpha=1, beta=1))
    assert res.stats["K_ny"] + res.stats["K_n1y"] == n.sum()


def test_eb_zipm_from_enumerated_responsibilities():
    n = np.array([[2, 0, 5], [0, 1, 3]])
    t = np.array([0.7, 1.3])
    x = ModelParams(0.35, 0.6, 1.2, 3.0)
    g = ExposureGrid(t, 3)
    Ey, Ez, Eyz = enumerate_zipm_posteriors(n, t, *x.as_array())
    prior = PriorSpec(alpha=1.0, beta=2.0, delta=1.0)
    a = empirical_bayes_zipm(DataSet(n=n), g, None, ZipmResponsibilities(Ey, Ez, Eyz), prior)
    b = empirical_bayes_zipm(DataSet(n=n), g, None, estep_zipm(DataSet(n=n), g, x), prior)
    assert math.isclose(a.estimate, b.estimate, rel_tol=1e-10)


def test_eb_estimate_is_the_shared_mean():
    post, est = _eb_posterior(12.0, 30.0, 80.0, 0.3, PriorSpec(alpha=1, beta=2, delta=1), False)
    assert est == PosteriorPhi(13.0, 33.0, 80.0, 0.3).mean() == post.mean()


def test_eb_monotone_in_rare_count():
    prior = PriorSpec(alpha=1, beta=2, delta=1)
    ests = [_eb_posterior(k, 40.0, 80.0, 0.3, prior, False)[1] for k in (1.0, 5.0, 10.5, 30.0)]
    assert all(a < b for a, b in zip(ests, ests[1:]))


def test_eb_mixture_on_simulated_data():
    g = ExposureGrid(np.ones(4), 1000)
    d = simulate_dataset(SimConfig(g, ModelParams(0.3, 1.0, 4.0, 2.0), seed=7))
    m = DataSet(n=d.m)
    fit = fit_em_mixture(m, g)
    post, est = empirical_bayes_mixture(m, g, fit, PriorSpec(alpha=1, beta=1, delta=1))
    assert abs(est - 2.0) < 3 * math.sqrt(post.variance())

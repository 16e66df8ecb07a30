import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from aldrm import aldist
from aldrm.aldist import ALParams, MixtureCoefficients
from aldrm.errors import DomainError

taus = st.floats(0.01, 0.99)
sigmas = st.floats(0.05, 20.0)
mus = st.floats(-100.0, 100.0)
probs = st.floats(1e-6, 1 - 1e-6)


def rho(v, tau):
    # independent restatement of the check loss
    return (tau if v >= 0 else 1 - tau) * abs(v)


# -- quantile loss -----------------------------------------------------------


@pytest.mark.parametrize("v,tau,expected", [(0.0, 0.3, 0.0), (4.0, 0.5, 2.0), (-2.0, 0.3, 1.4)])
def test_quantile_loss_examples(v, tau, expected):
    assert aldist.quantile_loss(v, tau) == pytest.approx(expected, abs=1e-15)


@given(st.floats(-1e6, 1e6), taus)
def test_quantile_loss_matches_weighted_absolute_value(v, tau):
    got = aldist.quantile_loss(v, tau)
    assert got >= 0
    assert got == pytest.approx(rho(v, tau), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
def test_quantile_loss_rejects_bad_tau(tau):
    with pytest.raises(DomainError):
        aldist.quantile_loss(1.0, tau)


# -- parameters ----------------------------------------------------------------


@pytest.mark.parametrize("mu,sigma,tau", [(0, 0, 0.5), (0, -1, 0.5), (0, 1, 0), (0, 1, 1), (math.inf, 1, 0.5), (0, 1, math.nan)])
def test_invalid_parameters_raise(mu, sigma, tau):
    with pytest.raises(DomainError):
        ALParams(mu, sigma, tau)


@given(taus)
def test_mixture_coefficients(tau):
    c = MixtureCoefficients.from_tau(tau)
    assert c.c2 > 0
    assert c.c1 == pytest.approx((1 - 2 * tau) / (tau * (1 - tau)))
    assert c.c2 == pytest.approx(2 / (tau * (1 - tau)))


def test_mixture_coefficient_c1_zero_at_half():
    assert MixtureCoefficients.from_tau(0.5).c1 == 0.0


# -- density -------------------------------------------------------------------


@given(mus, sigmas, taus)
def test_pdf_at_mode(mu, sigma, tau):
    assert aldist.pdf(mu, (mu, sigma, tau)) == pytest.approx(tau * (1 - tau) / sigma, rel=1e-12)


def test_pdf_example():
    assert aldist.pdf(1.0, (0.0, 1.0, 0.5)) == pytest.approx(0.25 * math.exp(-0.5), rel=1e-14)
    assert aldist.pdf(1.0, (0.0, 1.0, 0.5)) == pytest.approx(0.1516, abs=5e-5)


@pytest.mark.parametrize("mu,sigma,tau", [(0, 1, 0.5), (3, 0.5, 0.1), (-2, 2.0, 0.9), (1, 0.3, 0.02)])
def test_pdf_integrates_to_one(mu, sigma, tau):
    total, _ = integrate.quad(lambda y: aldist.pdf(y, (mu, sigma, tau)), mu - 40 * sigma, mu, epsabs=1e-13, epsrel=1e-13, limit=200)
    upper, _ = integrate.quad(lambda y: aldist.pdf(y, (mu, sigma, tau)), mu, mu + 40 * sigma, epsabs=1e-13, epsrel=1e-13, limit=200)
    # mass outside +-40 sigma is below exp(-40 * min(tau, 1 - tau)) for these cases
    tail = tau * math.exp(-40 * (1 - tau)) + (1 - tau) * math.exp(-40 * tau)
    assert total + upper == pytest.approx(1.0 - tail, abs=1e-9)


def test_log_pdf_far_tail_is_finite():
    for z in (300.0, 700.0, -700.0):
        lp = aldist.log_pdf(z, (0.0, 1.0, 0.3))
        expected = math.log(0.3 * 0.7) - rho(z, 0.3)
        assert lp == pytest.approx(expected, rel=1e-14)


@given(st.floats(-50, 50), mus, sigmas, taus)
def test_log_pdf_is_log_of_density(y, mu, sigma, tau):
    expected = math.log(tau * (1 - tau) / sigma) - rho((y - mu) / sigma, tau)
    assert aldist.log_pdf(y, (mu, sigma, tau)) == pytest.approx(expected, rel=1e-12, abs=1e-12)


# -- cdf and quantile ------------------------------------------------------------


@given(mus, sigmas, taus)
def test_cdf_at_mode_is_tau(mu, sigma, tau):
    assert aldist.cdf(mu, (mu, sigma, tau)) == pytest.approx(tau, rel=1e-14)


def test_cdf_lower_branch_example():
    assert aldist.cdf(-1.0, (0.0, 1.0, 0.25)) == pytest.approx(0.25 * math.exp(-0.75), rel=1e-14)
    assert aldist.cdf(-1.0, (0.0, 1.0, 0.25)) == pytest.approx(0.118092, abs=1e-6)


def test_cdf_upper_branch_matches_integral_of_density():
    p = (0.5, 1.5, 0.3)
    for y in (0.6, 2.0, 8.0):
        integral, _ = integrate.quad(lambda t: aldist.pdf(t, p), 0.5, y, epsabs=1e-14)
        assert aldist.cdf(y, p) == pytest.approx(0.3 + integral, abs=1e-12)


def test_cdf_extreme_arguments_do_not_warn():
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        v = aldist.cdf(np.array([-1e6, 1e6]), (0.0, 1.0, 0.5))
    assert v[0] == 0.0 and v[1] == 1.0


@pytest.mark.parametrize("p", [0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99])
@pytest.mark.parametrize("params", [(0, 1, 0.5), (2, 0.3, 0.1), (-5, 4, 0.85)])
def test_cdf_inverts_quantile(p, params):
    assert aldist.cdf(aldist.quantile(p, params), params) == pytest.approx(p, abs=1e-12)


def test_quantile_examples():
    assert aldist.quantile(0.9, (0, 1, 0.5)) == pytest.approx(-2 * math.log(0.2), rel=1e-14)
    assert aldist.quantile(0.9, (0, 1, 0.5)) == pytest.approx(3.21888, abs=1e-5)
    assert aldist.quantile(0.1, (0, 1, 0.5)) == pytest.approx(-3.21888, abs=1e-5)


@given(mus, sigmas, taus)
def test_quantile_at_tau_is_mu(mu, sigma, tau):
    assert aldist.quantile(tau, (mu, sigma, tau)) == pytest.approx(mu, abs=1e-12 * max(1, abs(mu)))


@given(probs, probs, mus, sigmas, taus)
def test_quantile_strictly_increasing(p1, p2, mu, sigma, tau):
    if abs(p1 - p2) < 1e-9:
        return
    lo, hi = sorted((p1, p2))
    assert aldist.quantile(lo, (mu, sigma, tau)) < aldist.quantile(hi, (mu, sigma, tau))


@given(probs, mus, sigmas, taus)
def test_cdf_quantile_roundtrip_property(p, mu, sigma, tau):
    assert aldist.cdf(aldist.quantile(p, (mu, sigma, tau)), (mu, sigma, tau)) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.3])
def test_quantile_rejects_bad_probability(p):
    with pytest.raises(DomainError):
        aldist.quantile(p, (0, 1, 0.5))


def test_vectorized_quantile_matches_scalar():
    p = np.array([0.05, 0.3, 0.5, 0.95])
    params = ALParams(np.array([0.0, 1.0, 2.0, 3.0]), np.array([1.0, 0.5, 2.0, 1.0]), np.array([0.2, 0.5, 0.7, 0.9]))
    vec = aldist.quantile(p, params)
    for k in range(4):
        assert vec[k] == pytest.approx(aldist.quantile(p[k], (params.mu[k], params.sigma[k], params.tau[k])), rel=1e-15)


# -- moments ---------------------------------------------------------------------


@pytest.mark.parametrize("mu,sigma,tau", [(0, 1, 0.25), (1, 2, 0.5), (-3, 0.5, 0.8)])
def test_moments_match_quadrature(mu, sigma, tau):
    f = lambda y: aldist.pdf(y, (mu, sigma, tau))
    lo, hi = mu - 200 * sigma, mu + 200 * sigma
    m1 = sum(integrate.quad(lambda y: y * f(y), a, b, limit=400)[0] for a, b in ((lo, mu), (mu, hi)))
    m2 = sum(integrate.quad(lambda y: (y - m1) ** 2 * f(y), a, b, limit=400)[0] for a, b in ((lo, mu), (mu, hi)))
    assert aldist.mean((mu, sigma, tau)) == pytest.approx(m1, rel=1e-8, abs=1e-9)
    assert aldist.variance((mu, sigma, tau)) == pytest.approx(m2, rel=1e-8)


def test_mean_example():
    assert aldist.mean((0, 1, 0.25)) == pytest.approx(8 / 3)


@given(mus, sigmas)
def test_symmetric_case_mean_is_mu(mu, sigma):
    assert aldist.mean((mu, sigma, 0.5)) == pytest.approx(mu)
    assert aldist.variance((mu, sigma, 0.5)) == pytest.approx(8 * sigma**2)


# -- samplers --------------------------------------------------------------------


def test_samplers_are_deterministic_given_seed():
    p = (1.0, 2.0, 0.3)
    a = aldist.sample_inverse(p, np.random.default_rng(7), size=50)
    b = aldist.sample_inverse(p, np.random.default_rng(7), size=50)
    np.testing.assert_array_equal(a, b)
    c = aldist.sample_mixture(p, np.random.default_rng(7), size=50)
    d = aldist.sample_mixture(p, np.random.default_rng(7), size=50)
    np.testing.assert_array_equal(c, d)


def test_scalar_sample_is_float(rng):
    assert isinstance(aldist.sample_inverse((0, 1, 0.5), rng), float)
    assert isinstance(aldist.sample_mixture((0, 1, 0.5), rng), float)


@pytest.mark.parametrize("sampler", [aldist.sample_inverse, aldist.sample_mixture])
@pytest.mark.parametrize("tau", [0.2, 0.5, 0.9])
def test_sample_moments(sampler, tau, rng):
    p = (1.0, 0.7, tau)
    x = sampler(p, rng, size=200_000)
    se_mean = math.sqrt(aldist.variance(p) / x.size)
    assert abs(x.mean() - aldist.mean(p)) < 4 * se_mean
    assert abs(np.mean(x < aldist.quantile(0.3, p)) - 0.3) < 4 * math.sqrt(0.21 / x.size)

"""Asymmetric Laplace distribution AL(mu, sigma, tau).

The density is ``tau (1 - tau) / sigma * exp(-rho_tau((y - mu) / sigma))`` where
``rho_tau`` is the quantile (check) loss. ``mu`` is both the mode and the
``tau``-quantile.

All functions broadcast over numpy arrays. Parameters may be passed either as an
:class:`ALParams` instance or as the three separate fields.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ALParams:
    """Location ``mu``, scale ``sigma > 0`` and skewness ``tau`` in (0, 1).

    Fields may be scalars or broadcast-compatible arrays.
    """

    mu: float
    sigma: float
    tau: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        if not np.all(np.isfinite(mu)):
            raise DomainError("mu must be finite")
        if not np.all(np.isfinite(sigma) & (sigma > 0)):
            raise DomainError("sigma must be finite and > 0")
        if not np.all((tau > 0) & (tau < 1)):
            raise DomainError("tau must lie in the open interval (0, 1)")


@dataclass(frozen=True)
class MixtureCoefficients:
    """Coefficients of the normal/exponential mixture representation.

    ``Y = mu + c1 W + sqrt(c2 sigma W) Z`` with ``W ~ Exp(mean sigma)`` and
    ``Z ~ N(0, 1)`` is AL(mu, sigma, tau).
    """

    c1: float
    c2: float

    @classmethod
    def from_tau(cls, tau):
        _check_tau(tau)
        tau = np.asarray(tau, dtype=float)
        one_m = 1.0 - tau
        return cls(c1=(1.0 - 2.0 * tau) / (tau * one_m), c2=2.0 / (tau * one_m))


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if not np.all((tau > 0) & (tau < 1)):
        raise DomainError("tau must lie in the open interval (0, 1)")


def _unpack(params):
    if not isinstance(params, ALParams):
        params = ALParams(*params)
    return (
        np.asarray(params.mu, dtype=float),
        np.asarray(params.sigma, dtype=float),
        np.asarray(params.tau, dtype=float),
    )


def _out(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


def quantile_loss(v, tau):
    """Check loss ``rho_tau(v) = v (tau - 1{v < 0})``."""
    _check_tau(tau)
    v = np.asarray(v, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return _out(np.where(v < 0, (tau - 1.0) * v, tau * v))


def log_pdf(y, params):
    mu, sigma, tau = _unpack(params)
    z = (np.asarray(y, dtype=float) - mu) / sigma
    rho = np.where(z < 0, (tau - 1.0) * z, tau * z)
    return _out(np.log(tau) + np.log1p(-tau) - np.log(sigma) - rho)


def pdf(y, params):
    return _out(np.exp(log_pdf(y, params)))


def cdf(y, params):
    """Closed-form distribution function.

    Lower branch ``tau exp((1 - tau)(y - mu) / sigma)`` for ``y <= mu`` and
    ``1 - (1 - tau) exp(-tau (y - mu) / sigma)`` above the mode.
    """
    mu, sigma, tau = _unpack(params)
    d = (np.asarray(y, dtype=float) - mu) / sigma
    lower = d <= 0
    # evaluate each branch only where its exponent is non-positive
    lo = tau * np.exp((1.0 - tau) * np.where(lower, d, 0.0))
    hi = 1.0 - (1.0 - tau) * np.exp(-tau * np.where(lower, 0.0, d))
    return _out(np.where(lower, lo, hi))


def quantile(prob, params):
    """Closed-form quantile function, continuous at ``prob = tau``."""
    mu, sigma, tau = _unpack(params)
    prob = np.asarray(prob, dtype=float)
    if not np.all((prob > 0) & (prob < 1)):
        raise DomainError("probability must lie in the open interval (0, 1)")
    lower = prob <= tau
    # guard the unused branch against log(0) warnings
    p_lo = np.where(lower, prob, tau)
    p_hi = np.where(lower, tau, prob)
    q_lo = mu + sigma / (1.0 - tau) * np.log(p_lo / tau)
    q_hi = mu - sigma / tau * np.log((1.0 - p_hi) / (1.0 - tau))
    return _out(np.where(lower, q_lo, q_hi))


def mean(params):
    mu, sigma, tau = _unpack(params)
    return _out(mu + sigma * (1.0 - 2.0 * tau) / (tau * (1.0 - tau)))


def variance(params):
    _, sigma, tau = _unpack(params)
    t2, s2 = tau**2, (1.0 - tau) ** 2
    return _out(sigma**2 * (t2 + s2) / (t2 * s2))


def sample_inverse(params, rng, size=None):
    """Draw by applying :func:`quantile` to uniform variates."""
    mu, sigma, tau = _unpack(params)
    if size is None:
        size = np.broadcast(mu, sigma, tau).shape
    u = rng.uniform(size=size)
    # Generator.uniform draws from [0, 1); zero has probability 2**-53
    u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
    return _out(quantile(u, ALParams(mu, sigma, tau)))


def sample_mixture(params, rng, size=None):
    """Draw through the exponential-weighted normal mixture.

    ``W ~ Exp(mean sigma)`` then ``Y | W ~ N(mu + c1 W, variance c2 sigma W)``.
    """
    mu, sigma, tau = _unpack(params)
    if size is None:
        size = np.broadcast(mu, sigma, tau).shape
    coef = MixtureCoefficients.from_tau(tau)
    w = rng.exponential(scale=1.0, size=size) * sigma
    z = rng.standard_normal(size=size)
    return _out(mu + coef.c1 * w + np.sqrt(coef.c2 * sigma * w) * z)

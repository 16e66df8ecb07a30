"""Numpy implementations of the sampler's per-observation kernels.

These are the reference semantics; ``_ckernels.pyx`` implements the same
functions as fused C loops. Random variates are always drawn by the caller so
both backends consume identical generator streams.
"""

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
W_FLOOR = 1e-300


def latent_weights(resid, sigma, tau, normals, uniforms):
    """Draw mixture weights from their GIG(1/2, chi, psi) full conditionals.

    ``chi = resid**2 / (c2 sigma)`` and ``psi = 1 / (2 sigma tau (1 - tau))``.
    The reciprocal of the weight is inverse Gaussian; it is generated with the
    Michael-Schucany-Haas transformation written in a form that stays finite
    as ``resid -> 0``, where the draw reduces to ``Gamma(1/2, rate psi/2)``.
    """
    tt = tau * (1.0 - tau)
    r = np.abs(resid) * np.sqrt(tt / (2.0 * sigma))
    s = 1.0 / np.sqrt(2.0 * sigma * tt)
    k = normals * normals / (2.0 * s)
    g = r + k + np.sqrt(k * (k + 2.0 * r))
    small = np.maximum(g, W_FLOOR)
    w = np.where(uniforms * (g + r) <= g, g / s, r * r / (s * small))
    return np.maximum(w, W_FLOOR)


def segment_aug_loglik(resid, sigma, tau, w, offsets, with_weight_term=True):
    """Per-subject sums of the augmented log-likelihood.

    Each observation contributes ``log N(resid; c1 w, c2 sigma w)`` plus, when
    ``with_weight_term``, the exponential density ``log Exp(w; mean sigma)``.
    """
    tt = tau * (1.0 - tau)
    c1 = (1.0 - 2.0 * tau) / tt
    v = 2.0 * sigma * w / tt
    e = resid - c1 * w
    ll = -0.5 * (LOG_2PI + np.log(v)) - e * e / (2.0 * v)
    if with_weight_term:
        ll = ll - np.log(sigma) - w / sigma
    return np.add.reduceat(ll, offsets[:-1])


def segment_gauss_loglik(resid, sigma, offsets):
    z = resid / sigma
    ll = -0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z
    return np.add.reduceat(ll, offsets[:-1])


def segment_gram(A, weights, offsets):
    """Per-subject weighted cross-products ``A_i^T diag(weights_i) A_i``."""
    outer = np.einsum("ni,nj->nij", A * weights[:, None], A)
    return np.add.reduceat(outer, offsets[:-1], axis=0)


def linear_predictor(X, coef, Z, effects, subject):
    eta = X @ coef
    if Z.shape[1]:
        eta += np.einsum("ij,ij->i", Z, effects[subject])
    return eta

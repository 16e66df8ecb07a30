"""Compiled twins of the functions in ``_pykernels``."""

import numpy as np
from libc.math cimport frexp, log, sqrt, fabs

cdef double LOG_2PI = 1.8378770664093453
cdef double W_FLOOR = 1e-300
cdef double LN2 = 0.6931471805599453


cdef inline void _mul_log(double* mant, long* expo, double x) noexcept nogil:
    # running product kept as mantissa * 2**expo so one log per segment suffices
    cdef int e
    mant[0] = frexp(mant[0] * x, &e)
    expo[0] += e


def latent_weights(const double[::1] resid, const double[::1] sigma, const double[::1] tau,
                   const double[::1] normals, const double[::1] uniforms):
    cdef Py_ssize_t n = resid.shape[0], i
    out = np.empty(n)
    cdef double[::1] w = out
    cdef double tt, r, s, k, g, val
    with nogil:
        for i in range(n):
            tt = tau[i] * (1.0 - tau[i])
            r = fabs(resid[i]) * sqrt(tt / (2.0 * sigma[i]))
            s = 1.0 / sqrt(2.0 * sigma[i] * tt)
            k = normals[i] * normals[i] / (2.0 * s)
            g = r + k + sqrt(k * (k + 2.0 * r))
            if uniforms[i] * (g + r) <= g:
                val = g / s
            else:
                val = r * r / (s * (g if g > W_FLOOR else W_FLOOR))
            w[i] = val if val > W_FLOOR else W_FLOOR
    return out


def segment_aug_loglik(const double[::1] resid, const double[::1] sigma, const double[::1] tau,
                       const double[::1] w, const Py_ssize_t[::1] offsets, bint with_weight_term=True):
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1, g, i
    out = np.empty(n_seg)
    cdef double[::1] acc = out
    cdef double t, inv_tt, v, e, total, mant
    cdef long expo
    with nogil:
        for g in range(n_seg):
            total = 0.0
            mant = 1.0
            expo = 0
            for i in range(offsets[g], offsets[g + 1]):
                t = tau[i]
                inv_tt = 1.0 / (t * (1.0 - t))
                v = 2.0 * sigma[i] * w[i] * inv_tt
                e = resid[i] - (1.0 - 2.0 * t) * inv_tt * w[i]
                total -= e * e / (2.0 * v)
                _mul_log(&mant, &expo, v)
                if with_weight_term:
                    _mul_log(&mant, &expo, sigma[i] * sigma[i])
                    total -= w[i] / sigma[i]
            acc[g] = total - 0.5 * (log(mant) + expo * LN2) - 0.5 * LOG_2PI * (offsets[g + 1] - offsets[g])
    return out


def segment_gauss_loglik(const double[::1] resid, const double[::1] sigma, const Py_ssize_t[::1] offsets):
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1, g, i
    out = np.empty(n_seg)
    cdef double[::1] acc = out
    cdef double z, total, mant
    cdef long expo
    with nogil:
        for g in range(n_seg):
            total = 0.0
            mant = 1.0
            expo = 0
            for i in range(offsets[g], offsets[g + 1]):
                z = resid[i] / sigma[i]
                total -= 0.5 * z * z
                _mul_log(&mant, &expo, sigma[i])
            acc[g] = total - (log(mant) + expo * LN2) - 0.5 * LOG_2PI * (offsets[g + 1] - offsets[g])
    return out


def segment_gram(const double[:, ::1] A, const double[::1] weights, const Py_ssize_t[::1] offsets):
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1, k = A.shape[1], g, i, a, b
    out = np.zeros((n_seg, k, k))
    cdef double[:, :, ::1] G = out
    cdef double wa
    with nogil:
        for g in range(n_seg):
            for i in range(offsets[g], offsets[g + 1]):
                for a in range(k):
                    wa = weights[i] * A[i, a]
                    for b in range(a, k):
                        G[g, a, b] += wa * A[i, b]
            for a in range(k):
                for b in range(a + 1, k):
                    G[g, b, a] = G[g, a, b]
    return out


def linear_predictor(const double[:, ::1] X, const double[::1] coef, const double[:, ::1] Z,
                     const double[:, ::1] effects, const Py_ssize_t[::1] subject):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], q = Z.shape[1], i, j, s
    out = np.empty(n)
    cdef double[::1] eta = out
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(p):
                acc += X[i, j] * coef[j]
            if q:
                s = subject[i]
                for j in range(q):
                    acc += Z[i, j] * effects[s, j]
            eta[i] = acc
    return out

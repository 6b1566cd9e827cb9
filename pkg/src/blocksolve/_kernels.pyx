# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chunked x-sweep; see ``_fallback.run_x_chunk`` for semantics."""

from cython.parallel cimport prange
from libc.math cimport fabs

COMPILED = True

cdef enum:
    PROX_ZERO = 0
    PROX_L1 = 1
    PROX_NONNEG = 2
    PROX_BOX = 3
    PROX_L1NONNEG = 4


cdef inline double _prox1(long kind, double v, double w, double tau,
                          double lo, double hi) noexcept nogil:
    cdef double t
    if kind == PROX_ZERO:
        return v
    if kind == PROX_NONNEG:
        return v if v > 0.0 else 0.0
    if kind == PROX_BOX:
        if v < lo:
            return lo
        if v > hi:
            return hi
        return v
    t = tau / w
    if kind == PROX_L1:
        if fabs(v) > t:
            return v - t if v > 0.0 else v + t
        return 0.0
    v = v - t
    return v if v > 0.0 else 0.0


cdef void _block_update(long i, long k, double[::1] x, double[::1] u, const double[:, ::1] Q,
                        const double[::1] c, const double[:, ::1] At, const long[::1] offsets,
                        const double[::1] eta, const long[::1] prox_kind,
                        const double[::1] prox_tau, const double[::1] lo,
                        const double[::1] hi, double extra, const double[:, ::1] noise,
                        bint has_f, bint has_noise, double[::1] out) noexcept nogil:
    cdef long a = offsets[i], b = offsets[i + 1]
    cdef long j, col, row, p = At.shape[1], n = x.shape[0]
    cdef double d, w = eta[i] + extra
    for j in range(a, b):
        d = 0.0
        for row in range(p):
            d += At[j, row] * u[row]
        if has_f:
            for col in range(n):
                d += Q[j, col] * x[col]
            d += c[j]
        if has_noise:
            d += noise[k, j]
        out[j] = _prox1(prox_kind[i], x[j] - d / w, w, prox_tau[i], lo[j], hi[j])


PAR_MIN_WORK = 1 << 16


def run_x_chunk(double[::1] x, double[::1] erg, double[::1] lam, double[::1] r,
                const double[:, ::1] Q, const double[::1] c, const double[:, ::1] At,
                const long[::1] offsets, const long[:, ::1] samples, const double[::1] eta,
                const long[::1] prox_kind, const double[::1] prox_tau, const double[::1] lo,
                const double[::1] hi, double rho_x, const double[::1] dual_step,
                const double[::1] extra_weight, const double[::1] erg_weight,
                const double[:, ::1] noise, int workers=1):
    cdef long K = samples.shape[0], nsel = samples.shape[1]
    cdef long n = x.shape[0], p = r.shape[0]
    cdef bint has_f = Q.shape[0] > 0
    cdef bint has_noise = noise.shape[0] > 0
    cdef long k, s, i, j, row, a, b
    cdef double wk, delta, dk, extra
    cdef double[::1] u
    cdef double[::1] out
    cdef long nblocks = offsets.shape[0] - 1
    # Forking threads costs more than small block updates; see PAR_MIN_WORK.
    cdef bint par = workers > 1 and nsel > 1 and (
        nsel * (n // max(nblocks, 1)) * (p + (n if has_f else 0)) >= PAR_MIN_WORK)
    import numpy as np
    u = np.empty(p)
    out = np.empty(n)
    with nogil:
        for k in range(K):
            wk = erg_weight[k]
            if wk != 0.0:
                for j in range(n):
                    erg[j] += wk * x[j]
            for row in range(p):
                u[row] = rho_x * r[row] - lam[row]
            extra = extra_weight[k]
            if par:
                for s in prange(nsel, num_threads=workers, schedule="static"):
                    _block_update(samples[k, s], k, x, u, Q, c, At, offsets, eta, prox_kind,
                                  prox_tau, lo, hi, extra, noise, has_f, has_noise, out)
            else:
                for s in range(nsel):
                    _block_update(samples[k, s], k, x, u, Q, c, At, offsets, eta, prox_kind,
                                  prox_tau, lo, hi, extra, noise, has_f, has_noise, out)
            for s in range(nsel):
                i = samples[k, s]
                a = offsets[i]
                b = offsets[i + 1]
                for j in range(a, b):
                    delta = out[j] - x[j]
                    if delta != 0.0:
                        for row in range(p):
                            r[row] += At[j, row] * delta
                    x[j] = out[j]
            dk = dual_step[k]
            for row in range(p):
                lam[row] -= dk * r[row]

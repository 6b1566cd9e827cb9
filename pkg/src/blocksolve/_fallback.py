"""Pure numpy version of the chunked x-sweep kernel.

Same signature and semantics as the compiled ``_kernels.run_x_chunk``.
"""

from __future__ import annotations

import numpy as np

from .parallel import block_map

# prox kind codes shared with the compiled kernel
PROX_ZERO, PROX_L1, PROX_NONNEG, PROX_BOX, PROX_L1NONNEG = range(5)

COMPILED = False


def _prox(kind, v, w, tau, lo, hi):
    if kind == PROX_ZERO:
        return v
    if kind == PROX_NONNEG:
        return np.maximum(v, 0.0)
    if kind == PROX_BOX:
        return np.minimum(np.maximum(v, lo), hi)
    t = tau / w
    if kind == PROX_L1:
        return np.where(np.abs(v) > t, v - np.sign(v) * t, 0.0)
    return np.maximum(v - t, 0.0)


# Below this many multiply-adds per iteration, threads cost more than they save.
PAR_MIN_WORK = 1 << 16


def run_x_chunk(x, erg, lam, r, Q, c, At, offsets, samples, eta, prox_kind, prox_tau,
                lo, hi, rho_x, dual_step, extra_weight, erg_weight, noise, workers=1):
    """Run ``len(samples)`` x-only iterations in place.

    Iteration ``k`` first adds ``erg_weight[k] * x`` to ``erg``, then updates
    every block in ``samples[k]`` by a prox-linear step with weight
    ``eta[i] + extra_weight[k]`` computed from the iteration-start state,
    folds the changes into the residual ``r`` in ascending block order and
    finally sets ``lam -= dual_step[k] * r``. ``At`` is ``A`` transposed;
    an empty ``Q`` means ``f = 0`` and an empty ``noise`` means exact
    gradients.
    """
    has_f = Q.shape[0] > 0
    has_noise = noise.shape[0] > 0
    n, p = x.shape[0], r.shape[0]
    nsel = samples.shape[1] if samples.ndim == 2 else 0
    work = nsel * (n // max(offsets.shape[0] - 1, 1)) * (p + (n if has_f else 0))
    if work < PAR_MIN_WORK:
        workers = 1
    for k in range(samples.shape[0]):
        if erg_weight[k] != 0.0:
            erg += erg_weight[k] * x
        blocks = samples[k]
        u = rho_x * r - lam
        extra = extra_weight[k]

        def update(i, k=k, u=u, extra=extra):
            a, b = offsets[i], offsets[i + 1]
            d = At[a:b] @ u
            if has_f:
                d += Q[a:b] @ x + c[a:b]
            if has_noise:
                d += noise[k, a:b]
            w = eta[i] + extra
            return _prox(prox_kind[i], x[a:b] - d / w, w, prox_tau[i], lo[a:b], hi[a:b])

        new = block_map(update, blocks, workers)
        for i, xi in zip(blocks, new):
            a, b = offsets[i], offsets[i + 1]
            r += (xi - x[a:b]) @ At[a:b]
            x[a:b] = xi
        lam -= dual_step[k] * r

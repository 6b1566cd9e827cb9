"""Hot-loop kernel selection.

``run_x_chunk`` is the compiled version when the extension was built and
``BLOCKSOLVE_PURE`` is unset; otherwise the numpy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback
from ._fallback import PROX_BOX, PROX_L1, PROX_L1NONNEG, PROX_NONNEG, PROX_ZERO

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = ["run_x_chunk", "COMPILED", "compiled_available", "select", "pack_problem",
           "kernel_eligible"]

_PROX_CODES = {"zero": PROX_ZERO, "l1": PROX_L1, "nonneg": PROX_NONNEG, "box": PROX_BOX,
               "l1nonneg": PROX_L1NONNEG}


_FORCE_PURE = bool(os.environ.get("BLOCKSOLVE_PURE"))


def compiled_available() -> bool:
    """Whether the compiled kernel is built and not disabled by ``BLOCKSOLVE_PURE``."""
    return _compiled is not None and not _FORCE_PURE


def select(pure: bool = False):
    """Return the kernel module: compiled unless ``pure``, ``BLOCKSOLVE_PURE`` or unavailable."""
    if pure or _FORCE_PURE or _compiled is None:
        return _fallback
    return _compiled


_active = select()
run_x_chunk = _active.run_x_chunk
COMPILED = _active is _compiled


def kernel_eligible(problem) -> bool:
    """Whether the chunked x-sweep can run ``problem`` (no y, catalog oracles)."""
    return (not problem.has_y and problem.f.kind in ("zero", "quadratic")
            and all(o.kind in _PROX_CODES for o in problem.x_prox))


def pack_problem(problem) -> dict:
    """Flat contiguous arrays the kernels take, built once per run."""
    part = problem.x_partition
    n = part.total_dim
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for i, o in enumerate(problem.x_prox):
        if o.kind == "box":
            s = part.slice(i)
            lo[s] = o.lo
            hi[s] = o.hi
    if problem.f.kind == "quadratic":
        Q, c = problem.f.Q, problem.f.c
    else:
        Q, c = np.zeros((0, 0)), np.zeros(0)
    return {
        "Q": np.ascontiguousarray(Q, dtype=np.float64),
        "c": np.ascontiguousarray(c, dtype=np.float64),
        "At": np.ascontiguousarray(problem.x_map.dense.T),
        "offsets": np.ascontiguousarray(part.offsets, dtype=np.int64),
        "prox_kind": np.array([_PROX_CODES[o.kind] for o in problem.x_prox], dtype=np.int64),
        "prox_tau": np.array([o.tau for o in problem.x_prox], dtype=np.float64),
        "lo": lo,
        "hi": hi,
    }

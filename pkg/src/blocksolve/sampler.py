"""Uniform random block subsets."""

from __future__ import annotations

import numpy as np

__all__ = ["sample_subset", "sample_subsets", "make_streams"]


def sample_subset(rng: np.random.Generator, N: int, n: int) -> np.ndarray:
    """Draw a uniformly random ``n``-subset of ``range(N)``, sorted ascending.

    Partial Fisher-Yates: position ``s`` is swapped with a uniform index in
    ``[s, N)`` for ``s < n``. All ``n`` swap targets come from one call on
    ``rng`` so the stream advances identically however the caller batches.
    """
    if not 1 <= n <= N:
        raise ValueError(f"sample size n={n} must satisfy 1 <= n <= N={N}")
    if n == N:
        return np.arange(N, dtype=np.int64)
    perm = np.arange(N, dtype=np.int64)
    targets = rng.integers(np.arange(n), N)
    for s in range(n):
        t = targets[s]
        perm[s], perm[t] = perm[t], perm[s]
    return np.sort(perm[:n])


def sample_subsets(rng: np.random.Generator, N: int, n: int, count: int) -> np.ndarray:
    """``count`` consecutive :func:`sample_subset` draws as a ``(count, n)`` array.

    Consumes ``rng`` exactly as ``count`` sequential calls would.
    """
    if not 1 <= n <= N:
        raise ValueError(f"sample size n={n} must satisfy 1 <= n <= N={N}")
    if n == N:
        return np.tile(np.arange(N, dtype=np.int64), (count, 1))
    targets = rng.integers(np.tile(np.arange(n), count), N).reshape(count, n)
    if n == 1:
        return targets.astype(np.int64)
    perm = np.tile(np.arange(N, dtype=np.int64), (count, 1))
    rows = np.arange(count)
    for s in range(n):
        t = targets[:, s]
        held = perm[rows, s].copy()
        perm[rows, s] = perm[rows, t]
        perm[rows, t] = held
    return np.sort(perm[:, :n], axis=1)


def make_streams(seed: int, names=("sampling", "noise", "generator")) -> dict:
    """Independent generators spawned from one seed, keyed by purpose.

    Stream ``k`` is child ``k`` of ``SeedSequence(seed)``, in the order of
    ``names``; adding noise never perturbs the sampling stream.
    """
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}

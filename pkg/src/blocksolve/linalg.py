"""Block-partitioned vectors and block-column linear maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "BlockDimensionError",
    "BlockPartition",
    "BlockVector",
    "BlockLinearMap",
    "power_iteration",
]

POWER_MAX_ITERS = 1000
POWER_RTOL = 1e-8


class BlockDimensionError(ValueError):
    """Raised when a block's shape disagrees with its partition."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


@dataclass(frozen=True)
class BlockPartition:
    """Sizes of consecutive blocks of a flat vector."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        for i, d in enumerate(dims):
            if d < 1:
                raise BlockDimensionError(f"block {i} has dimension {d} < 1", block=i)
        object.__setattr__(self, "dims", dims)
        offsets = np.zeros(len(dims) + 1, dtype=np.int64)
        np.cumsum(dims, out=offsets[1:])
        offsets.flags.writeable = False
        object.__setattr__(self, "_offsets", offsets)

    @classmethod
    def uniform(cls, num_blocks: int, block_dim: int) -> "BlockPartition":
        return cls((block_dim,) * num_blocks)

    def __len__(self):
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(self._offsets[-1])

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    def slice(self, i: int) -> slice:
        if not 0 <= i < len(self.dims):
            raise IndexError(f"block index {i} out of range for {len(self.dims)} blocks")
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def index_array(self, blocks: Sequence[int]) -> np.ndarray:
        """Flat coordinates of the given blocks, in the order given."""
        if len(blocks) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(*self.slice(i).indices(self.total_dim)) for i in blocks])


@dataclass
class BlockVector:
    """A flat float array viewed through a :class:`BlockPartition`."""

    partition: BlockPartition
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        if self.data.shape[0] != self.partition.total_dim:
            raise BlockDimensionError(
                f"data length {self.data.shape[0]} != partition total {self.partition.total_dim}"
            )

    @classmethod
    def zeros(cls, partition: BlockPartition) -> "BlockVector":
        return cls(partition, np.zeros(partition.total_dim))

    @classmethod
    def from_blocks(cls, blocks: Sequence) -> "BlockVector":
        arrs = [np.atleast_1d(np.asarray(b, dtype=np.float64)).reshape(-1) for b in blocks]
        part = BlockPartition(tuple(a.shape[0] for a in arrs))
        return cls(part, np.concatenate(arrs) if arrs else np.zeros(0))

    def block(self, i: int) -> np.ndarray:
        """View (not a copy) of block ``i``."""
        return self.data[self.partition.slice(i)]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(i) for i in range(len(self.partition))]

    def copy(self) -> "BlockVector":
        return BlockVector(self.partition, self.data.copy())

    def __len__(self):
        return len(self.partition)


class BlockLinearMap:
    """The map ``v -> sum_i A_i v_i`` with dense column blocks ``A_i``.

    Parameters
    ----------
    blocks : sequence of 2-D arrays
        ``A_i`` of shape ``(p, dim_i)``. All must share the row count.
    row_dim : int, optional
        Needed only when it cannot be read off the blocks.
    """

    def __init__(self, blocks, row_dim=None, partition=None):
        mats = [np.array(b, dtype=np.float64, ndmin=2) for b in blocks]
        if row_dim is None:
            if not mats:
                raise BlockDimensionError("row_dim required for an empty block list")
            row_dim = mats[0].shape[0]
        self.row_dim = int(row_dim)
        for i, m in enumerate(mats):
            if m.ndim != 2 or m.shape[0] != self.row_dim:
                raise BlockDimensionError(
                    f"block {i} has shape {m.shape}, expected ({self.row_dim}, *)", block=i
                )
        if partition is None:
            partition = BlockPartition(tuple(m.shape[1] for m in mats))
        elif len(partition) != len(mats):
            raise BlockDimensionError(
                f"partition has {len(partition)} blocks but {len(mats)} matrices were given"
            )
        for i, m in enumerate(mats):
            if m.shape[1] != partition.dims[i]:
                raise BlockDimensionError(
                    f"block {i} has {m.shape[1]} columns, partition says {partition.dims[i]}",
                    block=i,
                )
        self.partition = partition
        # one contiguous copy for whole-map products; per-block views into it
        self.dense = (
            np.ascontiguousarray(np.hstack(mats)) if mats else np.zeros((self.row_dim, 0))
        )
        if self.dense.shape[1] == 0:
            self.dense = np.zeros((self.row_dim, partition.total_dim))
        self.dense.flags.writeable = False
        self.blocks = [self.dense[:, partition.slice(i)] for i in range(len(partition))]

    @classmethod
    def from_dense(cls, matrix, partition: BlockPartition) -> "BlockLinearMap":
        matrix = np.array(matrix, dtype=np.float64, ndmin=2)
        if matrix.shape[1] != partition.total_dim:
            raise BlockDimensionError(
                f"matrix has {matrix.shape[1]} columns, partition total is {partition.total_dim}"
            )
        return cls([matrix[:, partition.slice(i)] for i in range(len(partition))],
                   row_dim=matrix.shape[0], partition=partition)

    @classmethod
    def zeros(cls, row_dim: int, partition: BlockPartition) -> "BlockLinearMap":
        return cls.from_dense(np.zeros((row_dim, partition.total_dim)), partition)

    def __len__(self):
        return len(self.partition)

    def __repr__(self):
        return f"BlockLinearMap(row_dim={self.row_dim}, dims={self.partition.dims})"

    def _check_block(self, i):
        if not 0 <= i < len(self.partition):
            raise IndexError(f"block index {i} out of range for {len(self.partition)} blocks")

    def apply(self, v: BlockVector) -> np.ndarray:
        """Return ``sum_i A_i v_i``, summed in ascending block order."""
        if v.partition != self.partition:
            for i, (a, b) in enumerate(zip(v.partition.dims, self.partition.dims)):
                if a != b:
                    raise BlockDimensionError(
                        f"block {i}: vector has dim {a}, map expects {b}", block=i
                    )
            raise BlockDimensionError(
                f"vector has {len(v.partition)} blocks, map expects {len(self.partition)}",
                block=min(len(v.partition), len(self.partition)),
            )
        out = np.zeros(self.row_dim)
        for i, a in enumerate(self.blocks):
            out += a @ v.block(i)
        return out

    def apply_block(self, i: int, vi) -> np.ndarray:
        self._check_block(i)
        vi = np.asarray(vi, dtype=np.float64).reshape(-1)
        if vi.shape[0] != self.partition.dims[i]:
            raise BlockDimensionError(
                f"block {i}: got length {vi.shape[0]}, expected {self.partition.dims[i]}", block=i
            )
        return self.blocks[i] @ vi

    def apply_adjoint_block(self, i: int, lam) -> np.ndarray:
        """Return ``A_i^T lam``."""
        self._check_block(i)
        lam = np.asarray(lam, dtype=np.float64).reshape(-1)
        if lam.shape[0] != self.row_dim:
            raise BlockDimensionError(
                f"block {i}: multiplier has length {lam.shape[0]}, map has {self.row_dim} rows",
                block=i,
            )
        return self.blocks[i].T @ lam

    def spectral_norm_sq(self, i: int) -> float:
        """``lambda_max(A_i^T A_i)`` by power iteration."""
        self._check_block(i)
        a = self.blocks[i]
        return power_iteration(lambda z: a.T @ (a @ z), a.shape[1])

    def full_spectral_norm_sq(self) -> float:
        """``lambda_max(A^T A)`` of the whole map."""
        a = self.dense
        return power_iteration(lambda z: a.T @ (a @ z), a.shape[1])


def _start_vectors(dim):
    yield np.ones(dim)
    # fallbacks for an all-ones start that lands in the null space
    yield np.arange(1.0, dim + 1.0)
    yield np.cos(np.arange(dim) * 1.3 + 0.7)


def power_iteration(matvec, dim, max_iters=POWER_MAX_ITERS, rtol=POWER_RTOL) -> float:
    """Largest eigenvalue of a symmetric PSD operator given by ``matvec``.

    Starts from the all-ones vector. Stops when the Rayleigh quotient changes
    by less than ``rtol`` relatively. Returns 0 for the zero operator.
    """
    if dim == 0:
        return 0.0
    best = 0.0
    for z in _start_vectors(dim):
        z = z / np.linalg.norm(z)
        w = matvec(z)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            continue
        est = float(z @ w)
        for _ in range(max_iters):
            z = w / nw
            w = matvec(z)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            new = float(z @ w)
            done = abs(new - est) <= rtol * abs(new)
            est = new
            if done:
                break
        return max(est, best)
    return best

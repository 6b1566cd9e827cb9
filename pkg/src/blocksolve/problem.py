"""Problem instances: smooth oracles, prox oracles, and generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import BlockDimensionError, BlockLinearMap, BlockPartition, BlockVector, power_iteration

__all__ = [
    "SET_TOL",
    "SmoothOracle",
    "ProxOracle",
    "ConstrainedProblem",
    "objective",
    "feas_violation",
    "partial_grad",
    "gen_ncqp",
    "gen_classo",
]

# absolute tolerance for set membership when evaluating indicators
SET_TOL = 1e-9

# safety factor on power-iteration eigenvalue estimates (they approach from below)
LAMBDA_SAFETY = 1.01


class SmoothOracle:
    """A smooth convex function of the flat variable with a Lipschitz bound.

    ``kind`` is one of ``"zero"``, ``"quadratic"`` (``0.5 x'Qx + c'x + offset``)
    or ``"custom"`` (``grad`` and ``value`` callbacks on the flat vector).
    """

    KINDS = ("zero", "quadratic", "custom")

    def __init__(self, kind="zero", Q=None, c=None, lipschitz=0.0, offset=0.0,
                 grad=None, value=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown smooth oracle kind {kind!r}")
        if lipschitz < 0:
            raise ValueError("lipschitz must be nonnegative")
        self.kind = kind
        self.lipschitz = float(lipschitz)
        self.offset = float(offset)
        self.Q = self.c = None
        if kind == "quadratic":
            Q = np.array(Q, dtype=np.float64, ndmin=2)
            if Q.shape[0] != Q.shape[1]:
                raise ValueError(f"Q must be square, got {Q.shape}")
            if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max(initial=0))):
                raise ValueError("Q must be symmetric")
            self.Q = np.ascontiguousarray(Q)
            self.c = np.zeros(Q.shape[0]) if c is None else np.asarray(c, dtype=np.float64).reshape(-1)
            if self.c.shape[0] != Q.shape[0]:
                raise ValueError("c length must match Q")
        elif kind == "custom":
            if grad is None or value is None:
                raise ValueError("custom smooth oracle needs grad and value callbacks")
        self._grad = grad
        self._value = value

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def quadratic(cls, Q, c=None, lipschitz=None, offset=0.0):
        """Quadratic oracle; ``lipschitz`` defaults to an inflated ``lambda_max(Q)``."""
        Q = np.array(Q, dtype=np.float64, ndmin=2)
        if lipschitz is None:
            lipschitz = LAMBDA_SAFETY * power_iteration(lambda z: Q @ z, Q.shape[0])
        return cls("quadratic", Q=Q, c=c, lipschitz=lipschitz, offset=offset)

    def value(self, x: np.ndarray) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "quadratic":
            return float(0.5 * x @ (self.Q @ x) + self.c @ x + self.offset)
        return float(self._value(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return self.Q @ x + self.c
        try:
            return np.asarray(self._grad(x), dtype=np.float64).reshape(-1)
        except Exception as exc:
            raise RuntimeError(f"custom gradient callback failed: {exc}") from exc

    def partial_grad(self, x: BlockVector, blocks: Sequence[int]) -> list[np.ndarray]:
        """Block gradients ``grad_i f(x)`` for ``i`` in ``blocks``."""
        part = x.partition
        if self.kind == "zero":
            return [np.zeros(part.dims[i]) for i in blocks]
        if self.kind == "quadratic":
            out = []
            for i in blocks:
                s = part.slice(i)
                out.append(self.Q[s] @ x.data + self.c[s])
            return out
        try:
            g = self.grad(x.data)
        except RuntimeError as exc:
            raise RuntimeError(f"{exc} (blocks {list(blocks)})") from exc
        return [g[part.slice(i)].copy() for i in blocks]

    def __repr__(self):
        return f"SmoothOracle({self.kind!r}, lipschitz={self.lipschitz:.6g})"


def _as_param(v):
    a = np.asarray(v, dtype=np.float64)
    return float(a) if a.ndim == 0 else a.reshape(-1)


class ProxOracle:
    """Nonsmooth term fused with its set indicator, accessed through its prox.

    ``prox(v, eta)`` returns ``argmin_z u(z) + I_X(z) + eta/2 ||z - v||^2``.
    Catalog kinds are ``zero``, ``l1`` (``tau ||z||_1``), ``nonneg``,
    ``box`` (``lo <= z <= hi``) and ``l1nonneg`` (``tau ||z||_1`` with
    ``z >= 0``). At a soft-threshold kink the returned value is 0.
    """

    KINDS = ("zero", "l1", "nonneg", "box", "l1nonneg", "custom")

    def __init__(self, kind="zero", tau=0.0, lo=None, hi=None, prox=None, value=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown prox kind {kind!r}")
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        self.kind = kind
        self.tau = float(tau)
        self.lo = self.hi = None
        if kind == "box":
            self.lo = _as_param(-np.inf if lo is None else lo)
            self.hi = _as_param(np.inf if hi is None else hi)
            if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
                raise ValueError("box requires lo <= hi")
        elif kind == "custom":
            if prox is None or value is None:
                raise ValueError("custom prox oracle needs prox and value callbacks")
        self._prox = prox
        self._value = value

    @property
    def is_indicator(self) -> bool:
        return self.kind in ("zero", "nonneg", "box")

    def params(self) -> dict:
        if self.kind in ("l1", "l1nonneg"):
            return {"tau": self.tau}
        if self.kind == "box":
            to_json = lambda p: p if isinstance(p, float) else p.tolist()  # noqa: E731
            return {"lo": to_json(self.lo), "hi": to_json(self.hi)}
        return {}

    def prox(self, v, eta: float) -> np.ndarray:
        if not eta > 0:
            raise ValueError(f"prox weight must be positive, got {eta}")
        v = np.asarray(v, dtype=np.float64)
        kind = self.kind
        if kind == "zero":
            return v.copy()
        if kind == "nonneg":
            return np.maximum(v, 0.0)
        if kind == "box":
            return np.minimum(np.maximum(v, self.lo), self.hi)
        if kind == "l1":
            t = self.tau / eta
            return np.where(np.abs(v) > t, v - np.sign(v) * t, 0.0)
        if kind == "l1nonneg":
            return np.maximum(v - self.tau / eta, 0.0)
        return np.asarray(self._prox(v, eta), dtype=np.float64)

    def value(self, z) -> float:
        """``u(z) + I_X(z)``; ``inf`` outside the set (tolerance ``SET_TOL``)."""
        z = np.asarray(z, dtype=np.float64)
        kind = self.kind
        if kind == "zero":
            return 0.0
        if kind == "l1":
            return self.tau * float(np.abs(z).sum())
        if kind in ("nonneg", "l1nonneg"):
            if np.any(z < -SET_TOL):
                return np.inf
            return self.tau * float(np.abs(z).sum()) if kind == "l1nonneg" else 0.0
        if kind == "box":
            if np.any(z < np.asarray(self.lo) - SET_TOL) or np.any(z > np.asarray(self.hi) + SET_TOL):
                return np.inf
            return 0.0
        return float(self._value(z))

    def __repr__(self):
        return f"ProxOracle({self.kind!r}, {self.params()})"


@dataclass
class ConstrainedProblem:
    """``min f(x) + sum u_i(x_i) + g(y) + sum v_j(y_j)  s.t.  Ax + By = b``.

    ``y_map`` is ``None`` for problems without a y variable; ``f`` or ``g``
    given as ``None`` mean zero. ``x_feasible``
    optionally carries a point with ``Ax = b`` (generators fill it in).
    """

    x_map: BlockLinearMap
    b: np.ndarray
    f: SmoothOracle
    x_prox: list
    y_map: Optional[BlockLinearMap] = None
    g: SmoothOracle = field(default_factory=SmoothOracle.zero)
    y_prox: list = field(default_factory=list)
    x_feasible: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.f is None:
            self.f = SmoothOracle.zero()
        if self.g is None:
            self.g = SmoothOracle.zero()
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        p = self.x_map.row_dim
        if self.b.shape[0] != p:
            raise BlockDimensionError(f"b has length {self.b.shape[0]}, A has {p} rows")
        if self.y_map is not None and self.y_map.row_dim != p:
            raise BlockDimensionError(f"B has {self.y_map.row_dim} rows, A has {p}")
        if len(self.x_prox) != len(self.x_map):
            raise BlockDimensionError(
                f"{len(self.x_prox)} x prox oracles for {len(self.x_map)} blocks")
        n_y = 0 if self.y_map is None else len(self.y_map)
        if len(self.y_prox) != n_y:
            raise BlockDimensionError(f"{len(self.y_prox)} y prox oracles for {n_y} blocks")
        if self.f.kind == "quadratic" and self.f.Q.shape[0] != self.x_map.partition.total_dim:
            raise BlockDimensionError("f's Q does not match the x dimension")
        if self.g.kind == "quadratic" and (
                self.y_map is None or self.g.Q.shape[0] != self.y_map.partition.total_dim):
            raise BlockDimensionError("g's Q does not match the y dimension")
        if self.x_feasible is not None:
            self.x_feasible = np.asarray(self.x_feasible, dtype=np.float64).reshape(-1)

    @property
    def x_partition(self) -> BlockPartition:
        return self.x_map.partition

    @property
    def y_partition(self) -> Optional[BlockPartition]:
        return None if self.y_map is None else self.y_map.partition

    @property
    def num_x_blocks(self) -> int:
        return len(self.x_map)

    @property
    def num_y_blocks(self) -> int:
        return 0 if self.y_map is None else len(self.y_map)

    @property
    def has_y(self) -> bool:
        return self.num_y_blocks > 0

    @property
    def p(self) -> int:
        return self.x_map.row_dim

    def zero_y(self) -> Optional[BlockVector]:
        return None if self.y_map is None else BlockVector.zeros(self.y_map.partition)

    def residual(self, x: BlockVector, y: Optional[BlockVector] = None) -> np.ndarray:
        r = self.x_map.apply(x)
        if self.y_map is not None and y is not None:
            r += self.y_map.apply(y)
        return r - self.b


def _separable_value(proxes, v: BlockVector) -> float:
    total = 0.0
    for i, op in enumerate(proxes):
        total += op.value(v.block(i))
        if total == np.inf:
            return np.inf
    return total


def objective(problem: ConstrainedProblem, x: BlockVector, y: Optional[BlockVector] = None) -> float:
    """``f(x) + sum u_i(x_i) + g(y) + sum v_j(y_j)``; ``inf`` off the sets."""
    if x.partition != problem.x_partition:
        raise BlockDimensionError("x partition does not match the problem")
    val = _separable_value(problem.x_prox, x)
    if val == np.inf:
        return np.inf
    val += problem.f.value(x.data)
    if problem.has_y and y is not None:
        if y.partition != problem.y_partition:
            raise BlockDimensionError("y partition does not match the problem")
        vy = _separable_value(problem.y_prox, y)
        if vy == np.inf:
            return np.inf
        val += vy + problem.g.value(y.data)
    return float(val)


def feas_violation(problem: ConstrainedProblem, x: BlockVector, y: Optional[BlockVector] = None) -> float:
    """``||Ax + By - b||_2``."""
    return float(np.linalg.norm(problem.residual(x, y)))


def partial_grad(oracle: SmoothOracle, point: BlockVector, blocks: Sequence[int]) -> list[np.ndarray]:
    return oracle.partial_grad(point, blocks)


def gen_ncqp(m_size: int, n_size: int, num_blocks: int, rank_deficit: int = 0,
             seed: int = 0) -> ConstrainedProblem:
    """Random nonnegativity constrained QP ``min 0.5 x'Qx + c'x, Ax = b, x >= 0``.

    ``Q = H H'`` with ``H`` of shape ``(n_size, n_size - rank_deficit)``; the
    entries of ``H``, ``A`` and ``c`` are standard normal. ``b = A x_feas``
    for ``x_feas`` uniform on ``[0, 1)``, so the feasible set is nonempty.
    """
    if num_blocks < 1 or n_size % num_blocks:
        raise ValueError(f"n_size={n_size} is not divisible by num_blocks={num_blocks}")
    if not 0 <= rank_deficit < n_size:
        raise ValueError(f"rank_deficit must lie in [0, {n_size})")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    H = rng.standard_normal((n_size, n_size - rank_deficit))
    Q = H @ H.T
    Q = 0.5 * (Q + Q.T)
    A = rng.standard_normal((m_size, n_size))
    c = rng.standard_normal(n_size)
    x_feas = rng.random(n_size)
    b = A @ x_feas
    part = BlockPartition.uniform(num_blocks, n_size // num_blocks)
    return ConstrainedProblem(
        x_map=BlockLinearMap.from_dense(A, part),
        b=b,
        f=SmoothOracle.quadratic(Q, c),
        x_prox=[ProxOracle("nonneg") for _ in range(num_blocks)],
        x_feasible=x_feas,
    )


def gen_classo(A, b_obs, C, d, tau: float, num_blocks: int) -> ConstrainedProblem:
    """Constrained lasso ``0.5||Ax - b||^2 + tau||x||_1, Cx <= d`` with slack ``y >= 0``.

    The result has constraint ``sum_i C_i x_i + y = d``, an l1 prox on every
    x block, and a single nonnegative y block.
    """
    A = np.array(A, dtype=np.float64, ndmin=2)
    C = np.array(C, dtype=np.float64, ndmin=2)
    b_obs = np.asarray(b_obs, dtype=np.float64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    n = A.shape[1]
    if A.shape[0] != b_obs.shape[0]:
        raise BlockDimensionError(f"A has {A.shape[0]} rows but b has length {b_obs.shape[0]}")
    if C.shape[1] != n:
        raise BlockDimensionError(f"C has {C.shape[1]} columns, A has {n}")
    if C.shape[0] != d.shape[0]:
        raise BlockDimensionError(f"C has {C.shape[0]} rows but d has length {d.shape[0]}")
    if num_blocks < 1 or n % num_blocks:
        raise ValueError(f"{n} variables cannot be split into {num_blocks} equal blocks")
    part = BlockPartition.uniform(num_blocks, n // num_blocks)
    p = C.shape[0]
    f = SmoothOracle.quadratic(A.T @ A, -A.T @ b_obs, offset=0.5 * float(b_obs @ b_obs))
    return ConstrainedProblem(
        x_map=BlockLinearMap.from_dense(C, part),
        b=d,
        f=f,
        x_prox=[ProxOracle("l1", tau=tau) for _ in range(num_blocks)],
        y_map=BlockLinearMap([np.eye(p)]),
        g=SmoothOracle.zero(),
        y_prox=[ProxOracle("nonneg")],
    )


def random_classo(rows: int, dim: int, constraints: int, num_blocks: int, tau: float = 1.0,
                  seed: int = 0) -> ConstrainedProblem:
    """Random constrained-lasso instance for :func:`gen_classo`.

    ``A``, ``b`` and ``C`` have standard normal entries; ``d = C x0 + s``
    with ``x0`` standard normal and ``s`` uniform on ``[0, 1)``, so ``x0``
    is strictly feasible for ``Cx <= d``. The stored feasible point is
    ``(x0, s)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    A = rng.standard_normal((rows, dim))
    b_obs = rng.standard_normal(rows)
    C = rng.standard_normal((constraints, dim))
    x0 = rng.standard_normal(dim)
    d = C @ x0 + rng.random(constraints)
    problem = gen_classo(A, b_obs, C, d, tau, num_blocks)
    problem.x_feasible = x0
    return problem

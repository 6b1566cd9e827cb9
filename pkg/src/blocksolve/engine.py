"""Randomized primal-dual block coordinate update.

Each iteration samples ``n`` of the ``N`` x blocks (and ``m`` of the ``M``
y blocks), takes one prox-linear step on each sampled block of the
augmented Lagrangian, refreshes the residual ``r = Ax + By - b`` and moves
the multiplier by ``lam -= rho * r``.

With block weights ``eta_i * I`` and the proximal matrix
``eta_I * I - rho_x A_I'A_I`` the coupling term cancels, so each sampled
block reduces to ``prox_{u_i, eta_i}(x_i - d_i / eta_i)`` with
``d_i = grad_i f(x) - A_i'lam + rho_x A_i'r``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .config import Regime, SolverConfig
from .linalg import BlockDimensionError, BlockVector
from .parallel import block_map
from .problem import ConstrainedProblem, feas_violation, objective
from .sampler import make_streams, sample_subset, sample_subsets
from .trace import Trace, TraceRow

__all__ = [
    "RESIDUAL_TOL",
    "RESIDUAL_CHECK_EVERY",
    "IterateState",
    "ErgodicPoint",
    "InnerSolverError",
    "init_state",
    "x_block_update",
    "y_block_update",
    "sample_blocks",
    "apply_step",
    "step",
    "ergodic_point",
    "compute_tilde_y",
    "run",
]

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
RESIDUAL_CHECK_EVERY = 100

INNER_MAX_ITERS = 100_000
INNER_TOL = 1e-10


class InnerSolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class IterateState:
    """Mutable solver state.

    ``erg_x`` holds ``sum_{j=1}^{k-1} w_j x^j`` (the current iterate is
    added at the start of the next step); ``wsum`` is the matching weight
    sum, kept with Neumaier compensation. ``prev_y`` and ``prev_lam`` are
    the y iterate and multiplier before the latest step.
    """

    x: BlockVector
    y: Optional[BlockVector]
    lam: np.ndarray
    r: np.ndarray
    k: int = 0
    erg_x: np.ndarray = None
    erg_y: Optional[np.ndarray] = None
    wsum: float = 0.0
    wsum_c: float = 0.0
    prev_y: Optional[BlockVector] = None
    prev_lam: Optional[np.ndarray] = None
    residual_alarms: int = 0
    max_residual_drift: float = 0.0

    def __post_init__(self):
        if self.erg_x is None:
            self.erg_x = np.zeros_like(self.x.data)
        if self.y is not None and self.erg_y is None:
            self.erg_y = np.zeros_like(self.y.data)

    def add_weight(self, w: float) -> None:
        t = self.wsum + w
        if abs(self.wsum) >= abs(w):
            self.wsum_c += (self.wsum - t) + w
        else:
            self.wsum_c += (w - t) + self.wsum
        self.wsum = t

    @property
    def weight_total(self) -> float:
        return self.wsum + self.wsum_c

    def copy(self) -> "IterateState":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return IterateState(
            x=self.x.copy(), y=cp(self.y), lam=self.lam.copy(), r=self.r.copy(), k=self.k,
            erg_x=self.erg_x.copy(), erg_y=cp(self.erg_y), wsum=self.wsum, wsum_c=self.wsum_c,
            prev_y=cp(self.prev_y), prev_lam=cp(self.prev_lam),
            residual_alarms=self.residual_alarms, max_residual_drift=self.max_residual_drift,
        )


@dataclass
class ErgodicPoint:
    x_hat: BlockVector
    y_hat: Optional[BlockVector]
    t: int


def init_state(problem: ConstrainedProblem, x0=None, y0=None) -> IterateState:
    """State with ``lam = 0``, ``r = Ax0 + By0 - b`` and empty averages."""
    xpart = problem.x_partition
    x = BlockVector.zeros(xpart) if x0 is None else _as_block(x0, xpart, "x0")
    y = None
    if problem.has_y:
        ypart = problem.y_partition
        y = BlockVector.zeros(ypart) if y0 is None else _as_block(y0, ypart, "y0")
    elif y0 is not None:
        raise BlockDimensionError("y0 given for a problem without y blocks")
    return IterateState(x=x, y=y, lam=np.zeros(problem.p), r=problem.residual(x, y))


def _as_block(v, part, name):
    if isinstance(v, BlockVector):
        if v.partition != part:
            raise BlockDimensionError(f"{name} partition does not match the problem")
        return v.copy()
    arr = np.array(v, dtype=np.float64).reshape(-1)
    if arr.shape[0] != part.total_dim:
        raise BlockDimensionError(f"{name} has length {arr.shape[0]}, expected {part.total_dim}")
    return BlockVector(part, arr)


def x_block_update(state: IterateState, problem: ConstrainedProblem, config: SolverConfig,
                   i: int, grad=None, extra_weight: float = 0.0, rho_x=None) -> np.ndarray:
    """New value of x block ``i`` from the current (frozen) state."""
    if grad is None:
        grad = problem.f.partial_grad(state.x, [i])[0]
    rho_x = config.rho_x if rho_x is None else rho_x
    d = grad + problem.x_map.apply_adjoint_block(i, rho_x * state.r - state.lam)
    w = config.eta_x[i] + extra_weight
    return problem.x_prox[i].prox(state.x.block(i) - d / w, w)


def y_block_update(state: IterateState, problem: ConstrainedProblem, config: SolverConfig,
                   j: int, r_half=None, grad=None) -> np.ndarray:
    """New value of y block ``j``; ``r_half`` is the residual after the x sweep."""
    if grad is None:
        grad = problem.g.partial_grad(state.y, [j])[0]
    r_half = state.r if r_half is None else r_half
    d = grad + problem.y_map.apply_adjoint_block(j, config.rho_y * r_half - state.lam)
    w = config.eta_y[j]
    return problem.y_prox[j].prox(state.y.block(j) - d / w, w)


def sample_blocks(rng, problem: ConstrainedProblem, config: SolverConfig):
    """Draw ``(I, J)``: x subset first, then y subset, from one stream."""
    N = problem.num_x_blocks
    if config.n > N:
        raise ValueError(f"sample size n={config.n} exceeds N={N} (uniform rule needs n <= N)")
    I = sample_subset(rng, N, config.n)
    if not problem.has_y or config.regime is Regime.NO_Y:
        return I, np.zeros(0, dtype=np.int64)
    M = problem.num_y_blocks
    if config.regime is Regime.SINGLE_Y:
        return I, np.arange(M, dtype=np.int64)
    if config.m > M:
        raise ValueError(f"sample size m={config.m} exceeds M={M} (uniform rule needs m <= M)")
    return I, sample_subset(rng, M, config.m)


def _sweep_x(state, problem, config, I, grads, extra_weight, rho_x, workers):
    new = block_map(
        lambda s: x_block_update(state, problem, config, I[s], grad=grads[s],
                                 extra_weight=extra_weight, rho_x=rho_x),
        range(len(I)), workers)
    order = np.argsort(I, kind="stable")
    for s in order:
        i = I[s]
        xi = state.x.block(i)
        state.r += problem.x_map.apply_block(i, new[s] - xi)
        xi[:] = new[s]


def _sweep_y(state, problem, config, J, workers):
    r_half = state.r.copy()
    grads = problem.g.partial_grad(state.y, J)
    new = block_map(
        lambda s: y_block_update(state, problem, config, J[s], r_half=r_half, grad=grads[s]),
        range(len(J)), workers)
    for s in np.argsort(J, kind="stable"):
        j = J[s]
        yj = state.y.block(j)
        state.r += problem.y_map.apply_block(j, new[s] - yj)
        yj[:] = new[s]


def _begin_step(state, weight):
    if state.k >= 1:
        state.erg_x += weight * state.x.data
        if state.y is not None:
            state.erg_y += weight * state.y.data
        state.add_weight(weight)
    state.prev_lam = state.lam.copy()
    if state.y is not None:
        state.prev_y = state.y.copy()


def apply_step(state: IterateState, problem: ConstrainedProblem, config: SolverConfig,
               I: Sequence[int], J: Sequence[int] = (), workers: int = 1) -> IterateState:
    """One iteration with given index sets; mutates and returns ``state``."""
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    _begin_step(state, 1.0)
    grads = problem.f.partial_grad(state.x, I)
    _sweep_x(state, problem, config, I, grads, 0.0, config.rho_x, workers)
    if len(J):
        _sweep_y(state, problem, config, J, workers)
    state.lam -= config.rho * state.r
    state.k += 1
    return state


def step(state: IterateState, problem: ConstrainedProblem, config: SolverConfig, rng,
         workers: int = 1) -> IterateState:
    """Sample ``I_k`` (and ``J_k``) from ``rng`` and apply one iteration."""
    I, J = sample_blocks(rng, problem, config)
    return apply_step(state, problem, config, I, J, workers)


def _average(current, erg, theta, t):
    return (current + theta * erg) / (1.0 + theta * t)


def ergodic_point(state: IterateState, config: SolverConfig, problem=None) -> ErgodicPoint:
    """``(x^{t+1} + theta * sum_{k=1}^t x^k) / (1 + theta t)`` with ``t = k - 1``.

    In the single-y regime the y average needs the auxiliary point from
    :func:`compute_tilde_y`, so ``problem`` must be given.
    """
    if state.k < 1:
        raise ValueError("ergodic point is undefined before the first step")
    t = state.k - 1
    theta = config.theta
    part = state.x.partition
    x_hat = BlockVector(part, _average(state.x.data, state.erg_x, theta, t))
    y_hat = None
    if state.y is not None:
        if config.regime is Regime.SINGLE_Y:
            if problem is None:
                raise ValueError("single-y ergodic point needs the problem")
            y_lead = compute_tilde_y(state, problem, config).data
        else:
            y_lead = state.y.data
        y_hat = BlockVector(state.y.partition, _average(y_lead, state.erg_y, theta, t))
    return ErgodicPoint(x_hat, y_hat, t)


def compute_tilde_y(state: IterateState, problem: ConstrainedProblem, config: SolverConfig,
                    max_iters: int = INNER_MAX_ITERS, tol: float = INNER_TOL) -> BlockVector:
    """Auxiliary y point for the single-y ergodic average.

    Minimizes, over y,
    ``<grad g(y^t) - B'lam^t, y> + v(y) + rho_x/2 ||A x^{t+1} + By - b||^2
    + theta/2 ||y - y^t||^2_{Qhat - rho_y B'B}``
    by proximal gradient with step ``1/(L_g + rho_x ||B||^2 + theta max eta')``
    until the gradient-mapping norm is at most ``tol``.
    """
    if state.k < 1 or state.prev_y is None:
        raise ValueError("auxiliary y point needs at least one completed step")
    B = problem.y_map
    ypart = problem.y_partition
    y_t = state.prev_y.data
    theta = config.theta
    eta_vec = np.repeat(config.eta_y, ypart.dims)
    Bd = B.dense
    e = problem.g.grad(y_t) - Bd.T @ state.prev_lam
    s = problem.x_map.apply(state.x) - problem.b
    L = problem.g.lipschitz + config.rho_x * B.full_spectral_norm_sq() + theta * float(eta_vec.max())
    L *= 1.01

    def grad_h(y):
        dy = y - y_t
        return (e + config.rho_x * (Bd.T @ (s + Bd @ y))
                + theta * (eta_vec * dy - config.rho_y * (Bd.T @ (Bd @ dy))))

    def prox_v(v):
        out = np.empty_like(v)
        for j, op in enumerate(problem.y_prox):
            sl = ypart.slice(j)
            out[sl] = op.prox(v[sl], L)
        return out

    y = y_t.copy()
    res = np.inf
    for _ in range(max_iters):
        y_new = prox_v(y - grad_h(y) / L)
        res = L * float(np.linalg.norm(y_new - y))
        y = y_new
        if res <= tol:
            return BlockVector(ypart, y)
    raise InnerSolverError(f"auxiliary y solve stopped at residual {res:.3e} "
                           f"after {max_iters} iterations", res)


# ---------------------------------------------------------------------------
# driver


def _check_residual(state, problem):
    drift = float(np.max(np.abs(state.r - problem.residual(state.x, state.y)), initial=0.0))
    state.max_residual_drift = max(state.max_residual_drift, drift)
    if drift > RESIDUAL_TOL:
        state.residual_alarms += 1
        log.warning("stored residual drifted by %.3e at k=%d; resynchronizing", drift, state.k)
        state.r = problem.residual(state.x, state.y)


def metrics_row(problem, state, point: ErgodicPoint, theta, t0) -> TraceRow:
    return TraceRow(
        k=state.k,
        epoch=state.k * theta,
        obj_last=objective(problem, state.x, state.y),
        obj_erg=objective(problem, point.x_hat, point.y_hat),
        feas_last=feas_violation(problem, state.x, state.y),
        feas_erg=feas_violation(problem, point.x_hat, point.y_hat),
        wall_s=time.perf_counter() - t0,
    )


def default_cadence(N: int, n: int) -> int:
    """One metric row per epoch (``N/n`` iterations)."""
    return max(1, int(round(N / n)))


def drive(problem, state, total, cadence, advance, point_fn, theta, callbacks):
    """Shared loop: advance in chunks, check the residual, record metrics.

    ``advance(state, count)`` runs ``count`` iterations. Chunks end at
    metric points and at residual-check points.
    """
    trace = Trace(state=state)
    t0 = time.perf_counter()
    end = state.k + total
    try:
        while state.k < end:
            next_metric = (state.k // cadence + 1) * cadence
            next_check = (state.k // RESIDUAL_CHECK_EVERY + 1) * RESIDUAL_CHECK_EVERY
            stop_at = min(next_metric, next_check, end)
            advance(state, stop_at - state.k)
            if state.k % RESIDUAL_CHECK_EVERY == 0:
                _check_residual(state, problem)
            if state.k % cadence == 0:
                row = metrics_row(problem, state, point_fn(state), theta, t0)
                trace.append(row)
                if any(cb(state.k, state, row) is False for cb in callbacks):
                    break
    except Exception as exc:
        exc.trace = trace
        raise
    finally:
        trace.info.update(residual_alarms=state.residual_alarms,
                          max_residual_drift=state.max_residual_drift)
    return trace


def _kernel_advance(problem, config, rng, workers, pure):
    mod = kernels.select(pure)
    packed = kernels.pack_problem(problem)
    N, n = problem.num_x_blocks, config.n
    eta = np.ascontiguousarray(config.eta_x)
    empty = np.zeros((0, 0))

    def advance(state, count):
        samples = sample_subsets(rng, N, n, count)
        erg_w = np.ones(count)
        if state.k == 0:
            erg_w[0] = 0.0
        mod.run_x_chunk(state.x.data, state.erg_x, state.lam, state.r, packed["Q"], packed["c"],
                        packed["At"], packed["offsets"], samples, eta, packed["prox_kind"],
                        packed["prox_tau"], packed["lo"], packed["hi"], config.rho_x,
                        np.full(count, config.rho), np.zeros(count), erg_w, empty,
                        int(workers))
        for w in erg_w:
            if w:
                state.add_weight(1.0)
        state.prev_lam = None
        state.k += count

    return advance


def run(problem: ConstrainedProblem, config: SolverConfig, callbacks: Sequence[Callable] = (),
        x0=None, y0=None, cadence: Optional[int] = None, workers: int = 1,
        use_kernel: Optional[bool] = None, pure: bool = False) -> Trace:
    """Run ``config.max_iters`` iterations and return the metric trace.

    Sampling draws from the first child stream of ``config.seed``. Problems
    without y blocks and with catalog oracles go through the chunked kernel
    (compiled when available, numpy when ``pure``); others step through the
    generic per-block path. Each callback gets ``(k, state, row)`` and may
    return ``False`` to stop.
    """
    state = init_state(problem, x0, y0)
    rng = make_streams(config.seed)["sampling"]
    if config.n > problem.num_x_blocks:
        raise ValueError(f"sample size n={config.n} exceeds N={problem.num_x_blocks} "
                         "(uniform rule needs n <= N)")
    cadence = cadence or default_cadence(problem.num_x_blocks, config.n)
    if use_kernel is None:
        use_kernel = kernels.kernel_eligible(problem)
    if use_kernel:
        if not kernels.kernel_eligible(problem):
            raise ValueError("problem is not eligible for the chunked kernel")
        advance = _kernel_advance(problem, config, rng, workers, pure)
    else:
        def advance(state, count):
            for _ in range(count):
                step(state, problem, config, rng, workers)

    trace = drive(problem, state, config.max_iters, cadence, advance,
                  lambda s: ergodic_point(s, config, problem), config.theta, callbacks)
    trace.info.update(kernel=("compiled" if use_kernel and kernels.select(pure).COMPILED
                              else "numpy" if use_kernel else "generic"))
    return trace

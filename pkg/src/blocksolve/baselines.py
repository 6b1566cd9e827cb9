"""Deterministic reference methods that the block update specializes to.

* linearized ALM: every x (and y) block takes the prox-linear step from the
  same frozen state, then ``lam -= rho r``; this is the block update with
  all blocks sampled.
* cyclic linearized ADMM: blocks are updated one at a time in ascending
  order, each seeing the residual and gradient left by its predecessors.
* proximal Jacobian ADMM: parallel x updates with weights
  ``eta_i I - rho A_i'A_i`` and a damped multiplier step ``gamma * rho``.
* two-block ADMM: exact alternating minimization for one x and one y block
  whose maps have orthonormal columns.
* :func:`pds_config` maps the randomized primal-dual saddle-point scheme
  onto the block update.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .config import ConfigError, Regime, SolverConfig
from .engine import (ErgodicPoint, IterateState, _begin_step, apply_step, default_cadence, drive,
                     init_state, x_block_update, y_block_update)
from .linalg import BlockLinearMap, BlockPartition, BlockVector
from .problem import ConstrainedProblem, ProxOracle, SmoothOracle

__all__ = [
    "BASELINES",
    "linearized_alm_step",
    "cyclic_linearized_admm_step",
    "prox_jadmm_step",
    "two_block_admm_step",
    "pds_config",
    "pds_problem",
    "run_baseline",
]

ORTHO_TOL = 1e-10


def linearized_alm_step(state: IterateState, problem: ConstrainedProblem, config: SolverConfig,
                        workers: int = 1) -> IterateState:
    """All blocks updated from the same state, then ``lam -= rho r``."""
    I = np.arange(problem.num_x_blocks)
    J = np.arange(problem.num_y_blocks) if problem.has_y else ()
    return apply_step(state, problem, config, I, J, workers)


def cyclic_linearized_admm_step(state: IterateState, problem: ConstrainedProblem,
                                config: SolverConfig) -> IterateState:
    """Gauss-Seidel sweep over x blocks then y blocks, then ``lam -= rho r``.

    Each block's gradient and residual include the updates of the blocks
    before it in the sweep.
    """
    _begin_step(state, 1.0)
    for i in range(problem.num_x_blocks):
        new = x_block_update(state, problem, config, i)
        xi = state.x.block(i)
        state.r += problem.x_map.apply_block(i, new - xi)
        xi[:] = new
    if problem.has_y:
        for j in range(problem.num_y_blocks):
            new = y_block_update(state, problem, config, j)
            yj = state.y.block(j)
            state.r += problem.y_map.apply_block(j, new - yj)
            yj[:] = new
    state.lam -= config.rho * state.r
    state.k += 1
    return state


def prox_jadmm_step(state: IterateState, problem: ConstrainedProblem, eta, rho: float,
                    gamma: float = 1.0) -> IterateState:
    """Proximal Jacobian ADMM with block weights ``P_i = eta_i I - rho A_i'A_i``.

    Block ``i`` minimizes ``u_i(x_i) + rho/2 ||A_i x_i + sum_{j!=i} A_j x_j - b - lam/rho||^2
    + 1/2 ||x_i - x_i^k||^2_{P_i}``; with this ``P_i`` the quadratic in ``A_i``
    cancels and the minimizer is one prox. Then
    ``lam -= gamma * rho * (Ax - b)``.
    """
    if problem.has_y or problem.f.kind != "zero":
        raise ValueError("proximal Jacobian ADMM needs a separable problem without y")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    eta = np.asarray(eta, dtype=np.float64).reshape(-1)
    A = problem.x_map
    u = rho * state.r - state.lam
    new = []
    for i in range(problem.num_x_blocks):
        g = A.apply_adjoint_block(i, u)
        new.append(problem.x_prox[i].prox(state.x.block(i) - g / eta[i], eta[i]))
    _begin_step(state, 1.0)
    for i, xi_new in enumerate(new):
        state.x.block(i)[:] = xi_new
    state.r = problem.residual(state.x, None)
    state.lam -= gamma * rho * state.r
    state.k += 1
    return state


def _orthonormal(M: np.ndarray) -> bool:
    return np.allclose(M.T @ M, np.eye(M.shape[1]), rtol=0.0, atol=ORTHO_TOL)


def two_block_admm_step(state: IterateState, problem: ConstrainedProblem, rho: float) -> IterateState:
    """Classic ADMM on ``min u(x) + v(y)`` s.t. ``Ax + By = b``.

    Needs one x block and one y block, zero smooth parts, and orthonormal
    columns in ``A`` and ``B`` so each exact minimization is a prox:
    ``x = prox_{u,rho}(-A'(By - b - lam/rho))``.
    """
    if problem.num_x_blocks != 1 or problem.num_y_blocks != 1:
        raise ValueError("two-block ADMM needs exactly one x block and one y block")
    if problem.f.kind != "zero" or problem.g.kind != "zero":
        raise ValueError("two-block ADMM needs zero smooth parts")
    A, B = problem.x_map.dense, problem.y_map.dense
    if not (_orthonormal(A) and _orthonormal(B)):
        raise ValueError("two-block ADMM needs orthonormal columns in A and B")
    b, lam = problem.b, state.lam
    _begin_step(state, 1.0)
    x = problem.x_prox[0].prox(-A.T @ (B @ state.y.data - b - lam / rho), rho)
    state.x.data[:] = x
    y = problem.y_prox[0].prox(-B.T @ (A @ x - b - lam / rho), rho)
    state.y.data[:] = y
    state.r = A @ x + B @ y - b
    state.lam -= rho * state.r
    state.k += 1
    return state


def pds_problem(x_map: BlockLinearMap, x_prox, d) -> ConstrainedProblem:
    """Constrained form of the saddle problem ``min_z -d'z + max_x <z, Ax> - sum u_i(x_i)``.

    With ``g`` the conjugate of ``z -> -d'z`` (the indicator of ``y = -d``)
    the saddle problem is ``min sum u_i(x_i) + g(y)`` s.t. ``Ax + y = 0``.
    """
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    p = x_map.row_dim
    if d.shape[0] != p:
        raise ValueError(f"d has length {d.shape[0]}, expected {p}")
    y_map = BlockLinearMap([np.eye(p)], row_dim=p)
    return ConstrainedProblem(
        x_map=x_map, b=np.zeros(p), f=SmoothOracle.zero(), x_prox=list(x_prox),
        y_map=y_map, g=SmoothOracle.zero(), y_prox=[ProxOracle("box", lo=-d, hi=-d)])


def pds_config(problem: ConstrainedProblem, q: float, eta: float, tau: float,
               max_iters: int = 1000, seed: int = 0) -> SolverConfig:
    """Block-update settings that reproduce the randomized primal-dual scheme.

    One x block per iteration, ``rho_x = q/eta``, ``rho_y = rho = 1/eta``,
    x weights ``tau`` (so the proximal matrix is ``tau I - (q/eta) A_i'A_i``)
    and y weight ``rho_y`` (no y proximal term). The multiplier plays the
    role of the dual variable ``z``. Start from ``y0 = -A x0`` so the
    extrapolated dual point matches.
    """
    if not 0 <= q <= 1 or not eta > 0 or not tau > 0:
        raise ConfigError("need 0 <= q <= 1, eta > 0 and tau > 0")
    if problem.num_y_blocks != 1:
        raise ConfigError("primal-dual form needs exactly one y block")
    B = problem.y_map.dense
    if B.shape[0] != B.shape[1] or not np.array_equal(B, np.eye(B.shape[0])):
        raise ConfigError("primal-dual form needs B = I")
    if np.any(problem.b != 0):
        raise ConfigError("primal-dual form needs b = 0")
    return SolverConfig(regime=Regime.SINGLE_Y, n=1, m=1, rho_x=q / eta, rho=1.0 / eta,
                        rho_y=1.0 / eta, eta_x=np.full(problem.num_x_blocks, float(tau)),
                        eta_y=np.array([1.0 / eta]), max_iters=max_iters, seed=seed)


BASELINES = ("lalm", "ladmm", "pjadmm")


def _plain_average(state: IterateState) -> ErgodicPoint:
    # (x^{t+1} + sum_{k<=t} x^k) / (t + 1)
    t = state.k - 1
    x_hat = BlockVector(state.x.partition, (state.x.data + state.erg_x) / (1.0 + t))
    y_hat = None
    if state.y is not None:
        y_hat = BlockVector(state.y.partition, (state.y.data + state.erg_y) / (1.0 + t))
    return ErgodicPoint(x_hat, y_hat, t)


def run_baseline(problem: ConstrainedProblem, name: str, config: SolverConfig,
                 gamma: float = 1.0, x0=None, y0=None, cadence: Optional[int] = None,
                 callbacks=(), workers: int = 1):
    """Run a deterministic baseline for ``config.max_iters`` iterations.

    Every block is touched each iteration, so one iteration is one epoch
    and the ergodic columns use the plain average of ``x^1 .. x^{t+1}``.
    """
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}; choose from {', '.join(BASELINES)}")
    state = init_state(problem, x0, y0)
    if name == "lalm":
        def advance(s, count):
            for _ in range(count):
                linearized_alm_step(s, problem, config, workers)
    elif name == "ladmm":
        def advance(s, count):
            for _ in range(count):
                cyclic_linearized_admm_step(s, problem, config)
    else:
        def advance(s, count):
            for _ in range(count):
                prox_jadmm_step(s, problem, config.eta_x, config.rho, gamma)
    trace = drive(problem, state, config.max_iters, cadence or 1, advance, _plain_average,
                  1.0, callbacks)
    trace.info.update(kernel="generic", algo=name)
    return trace

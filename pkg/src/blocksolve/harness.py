"""Reference solutions, rate fitting and experiment orchestration."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import engine
from .baselines import BASELINES, run_baseline
from .config import ConfigError, Regime, SolverConfig
from .io import load_problem
from .linalg import BlockVector
from .problem import ConstrainedProblem, gen_ncqp, objective
from .stochastic import StepSchedule, StochasticOracle, run_stochastic
from .trace import Trace
from .validate import derive_params, derive_stochastic_params

__all__ = [
    "ALGOS",
    "ReferenceSolution",
    "SlopeFitError",
    "kkt_residual",
    "reference_solve",
    "slope_fit",
    "ergodic_gap",
    "infer_regime",
    "make_config",
    "solve",
    "run_experiment",
]

log = logging.getLogger(__name__)

ALGOS = ("rpdbu", "rpdbus") + BASELINES
KKT_TOL = 1e-10
SUMMARY_FIELDS = ("problem", "algo", "name", "seed", "status", "rows", "obj_last", "obj_erg",
                  "feas_last", "feas_erg", "trace", "error")


# ---------------------------------------------------------------------------
# reference solutions


@dataclass
class ReferenceSolution:
    x_star: BlockVector
    y_star: Optional[BlockVector]
    f_star: float
    method: str
    kkt_residual: float
    lam_star: Optional[np.ndarray] = None
    converged: bool = True


def kkt_residual(problem: ConstrainedProblem, x: BlockVector, y: Optional[BlockVector],
                 lam: np.ndarray) -> float:
    """Largest of the feasibility violation and the unit-step gradient-mapping norms.

    The x part is ``||x - prox_{u,1}(x - (grad f(x) - A'lam))||``, the y part
    likewise; all are zero exactly at a KKT point.
    """
    feas = float(np.linalg.norm(problem.residual(x, y)))
    gx = problem.f.grad(x.data) - problem.x_map.dense.T @ lam
    stat = _prox_gap(problem.x_prox, x, gx)
    if problem.has_y and y is not None:
        gy = problem.g.grad(y.data) - problem.y_map.dense.T @ lam
        stat = max(stat, _prox_gap(problem.y_prox, y, gy))
    return max(feas, stat)


def _prox_gap(proxes, v: BlockVector, grad: np.ndarray) -> float:
    part = v.partition
    total = 0.0
    for i, op in enumerate(proxes):
        s = part.slice(i)
        d = v.data[s] - op.prox(v.data[s] - grad[s], 1.0)
        total += float(d @ d)
    return math.sqrt(total)


def _polish_eligible(problem: ConstrainedProblem) -> bool:
    return (not problem.has_y and problem.f.kind in ("zero", "quadratic")
            and all(o.kind in ("zero", "nonneg", "box") for o in problem.x_prox))


def _bounds(problem):
    part = problem.x_partition
    lo = np.full(part.total_dim, -np.inf)
    hi = np.full(part.total_dim, np.inf)
    for i, o in enumerate(problem.x_prox):
        s = part.slice(i)
        if o.kind == "nonneg":
            lo[s] = 0.0
        elif o.kind == "box":
            lo[s], hi[s] = o.lo, o.hi
    return lo, hi


def _active_set_polish(problem: ConstrainedProblem, x: np.ndarray, lam: np.ndarray,
                       max_rounds: int = 100):
    """Primal-dual active-set iterations on the bound-constrained QP, warm-started.

    Each round fixes the guessed active bounds, solves the equality-constrained
    KKT system on the free coordinates by least squares, and re-guesses the
    active set from ``z = Qx + c - A'lam`` (``z >= 0`` at lower bounds,
    ``z <= 0`` at upper bounds).
    """
    dim = x.shape[0]
    if problem.f.kind == "quadratic":
        Q, c = problem.f.Q, problem.f.c
    else:
        Q, c = np.zeros((dim, dim)), np.zeros(dim)
    A, b = problem.x_map.dense, problem.b
    lo, hi = _bounds(problem)
    x, lam = x.copy(), lam.copy()
    z = Q @ x + c - A.T @ lam
    seen = set()
    for _ in range(max_rounds):
        at_lo = np.isfinite(lo) & (z - (x - lo) > 0)
        at_hi = np.isfinite(hi) & (z - (x - hi) < 0) & ~at_lo
        key = (at_lo.tobytes(), at_hi.tobytes())
        if key in seen:
            break
        seen.add(key)
        free = ~(at_lo | at_hi)
        xb = np.where(at_lo, lo, np.where(at_hi, hi, 0.0))
        F = np.flatnonzero(free)
        nf, p = F.size, A.shape[0]
        K = np.zeros((nf + p, nf + p))
        K[:nf, :nf] = Q[np.ix_(F, F)]
        K[:nf, nf:] = -A[:, F].T
        K[nf:, :nf] = A[:, F]
        rhs = np.concatenate([-(c[F] + Q[F] @ xb), b - A @ xb])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        x = xb
        x[F] = sol[:nf]
        lam = sol[nf:]
        z = Q @ x + c - A.T @ lam
        z[F] = 0.0
    return x, lam


def reference_solve(problem: ConstrainedProblem, budget: int = 20000, tol: float = KKT_TOL,
                    check_every: int = 500, rho_x: float = 1.0) -> ReferenceSolution:
    """High-accuracy solution from the deterministic full-update method.

    Linearized ALM (every block updated each iteration, validator weights)
    runs for up to ``budget`` iterations, stopping once the KKT residual is
    at most ``tol``. For bound-constrained QPs without y the best point is
    then refined by active-set iterations. If the target is still unmet the
    best point found is returned with ``converged=False``.
    """
    N, M = problem.num_x_blocks, problem.num_y_blocks
    regime = infer_regime(problem)
    config = derive_params(problem, regime, N, M, rho_x, max_iters=budget)
    best = {"res": math.inf}

    def record(state):
        res = kkt_residual(problem, state.x, state.y, state.lam)
        if res < best["res"]:
            best.update(res=res, x=state.x.copy(), lam=state.lam.copy(),
                        y=None if state.y is None else state.y.copy())
        return res

    def callback(k, state, row):
        return record(state) > tol

    cadence = max(1, min(check_every, budget)) if budget else 1
    if budget > 0:
        if problem.has_y:
            trace = run_baseline(problem, "lalm", config, cadence=cadence, callbacks=[callback])
        else:
            trace = engine.run(problem, config, callbacks=[callback], cadence=cadence)
        record(trace.state)
    else:
        record(engine.init_state(problem))
    method = "lalm"
    if best["res"] > tol and _polish_eligible(problem):
        xp, lp = _active_set_polish(problem, best["x"].data, best["lam"])
        xb = BlockVector(problem.x_partition, xp)
        res = kkt_residual(problem, xb, None, lp)
        if res < best["res"]:
            best.update(res=res, x=xb, lam=lp)
            method = "lalm+active-set"
    converged = best["res"] <= tol
    if not converged:
        log.warning("reference solve stopped at KKT residual %.3e (target %.1e)", best["res"], tol)
    return ReferenceSolution(
        x_star=best["x"], y_star=best["y"] if "y" in best else None,
        f_star=objective(problem, best["x"], best.get("y")), method=method,
        kkt_residual=best["res"], lam_star=best["lam"], converged=converged)


# ---------------------------------------------------------------------------
# rates


class SlopeFitError(ValueError):
    pass


def slope_fit(trace, column, k_min: float, k_max: float, axis: str = "k") -> float:
    """Least-squares slope of ``log(value)`` against ``log(axis)`` over a window.

    ``column`` is a trace column name or an array aligned with the rows;
    ``axis`` is ``"k"`` or ``"epoch"``. Rows with ``k_min <= axis <= k_max``
    are used; at least 10 are needed and all values must be positive.
    """
    xs = trace.column(axis)
    vals = trace.column(column) if isinstance(column, str) else np.asarray(column, dtype=float)
    if vals.shape != xs.shape:
        raise SlopeFitError(f"{vals.shape[0]} values for {xs.shape[0]} rows")
    mask = (xs >= k_min) & (xs <= k_max)
    if mask.sum() < 10:
        raise SlopeFitError(f"only {int(mask.sum())} rows in [{k_min}, {k_max}]; need >= 10")
    w, v = xs[mask], vals[mask]
    if np.any(~(v > 0)) or np.any(~(w > 0)):
        raise SlopeFitError("values must be positive; the gap may be below the noise floor")
    return float(np.polyfit(np.log(w), np.log(v), 1)[0])


def ergodic_gap(trace: Trace, f_star: float) -> np.ndarray:
    """``max(|obj_erg - f_star|, feas_erg)`` per row."""
    return np.maximum(np.abs(trace.column("obj_erg") - f_star), trace.column("feas_erg"))


# ---------------------------------------------------------------------------
# solving


def infer_regime(problem: ConstrainedProblem) -> Regime:
    if not problem.has_y:
        return Regime.NO_Y
    return Regime.SINGLE_Y if problem.num_y_blocks == 1 else Regime.MULTI_XY


def _default_m(problem, regime, n, m):
    M, N = problem.num_y_blocks, problem.num_x_blocks
    if regime is Regime.NO_Y:
        return 0
    if regime is Regime.SINGLE_Y:
        return M
    if m is not None:
        return m
    if (n * M) % N:
        raise ConfigError(f"n/N = {n}/{N} gives no integer m with m/M = n/N (M={M})")
    return n * M // N


def make_config(problem: ConstrainedProblem, algo: str = "rpdbu", regime=None, n: int = 1,
                m: Optional[int] = None, rho_x: float = 1.0, iters: int = 1000,
                seed: int = 0) -> SolverConfig:
    """Validator-derived settings for ``algo``; baselines update all blocks."""
    if algo not in ALGOS:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGOS)}")
    regime = infer_regime(problem) if regime is None else Regime.parse(regime)
    if algo == "rpdbus":
        return derive_stochastic_params(problem, n, rho_x, iters, seed)
    if algo in BASELINES:
        n, m = problem.num_x_blocks, problem.num_y_blocks
    m = _default_m(problem, regime, n, m)
    return derive_params(problem, regime, n, m, rho_x, iters, seed)


def solve(problem: ConstrainedProblem, algo: str = "rpdbu", config: Optional[SolverConfig] = None,
          *, regime=None, n: int = 1, m: Optional[int] = None, rho_x: float = 1.0,
          iters: int = 1000, seed: int = 0, cadence: Optional[int] = None, workers: int = 1,
          sigma: float = 0.0, alpha0: float = 1.0, schedule: str = "sqrtk",
          gamma: float = 1.0, pure: bool = False, callbacks=()) -> Trace:
    """Run one algorithm on ``problem`` and return its trace.

    Without ``config`` the settings come from :func:`make_config`. The
    stochastic method starts from the problem's stored feasible point.
    """
    if config is None:
        config = make_config(problem, algo, regime, n, m, rho_x, iters, seed)
    if algo == "rpdbu":
        return engine.run(problem, config, callbacks, cadence=cadence, workers=workers, pure=pure)
    if algo == "rpdbus":
        sched = StepSchedule(schedule, alpha0, config.max_iters if schedule in ("fixed", "fixedHorizon") else None)
        return run_stochastic(problem, config, sched, StochasticOracle(problem.f, sigma),
                              callbacks=callbacks, cadence=cadence, workers=workers, pure=pure)
    return run_baseline(problem, algo, config, gamma=gamma, cadence=cadence,
                        callbacks=callbacks, workers=workers)


# ---------------------------------------------------------------------------
# experiments


def _load_problem_spec(spec: dict, base: Path) -> ConstrainedProblem:
    if "file" in spec:
        return load_problem(base / spec["file"])
    gen = spec.get("gen")
    if gen == "ncqp":
        return gen_ncqp(int(spec["m"]), int(spec["n"]), int(spec["blocks"]),
                        int(spec.get("rankDeficit", 0)), int(spec.get("seed", 0)))
    raise ConfigError(f"problem entry needs 'file' or gen='ncqp', got {spec!r}")


_PARAM_KEYS = {"regime": "regime", "n": "n", "m": "m", "rhoX": "rho_x", "sigma": "sigma",
               "alpha0": "alpha0", "schedule": "schedule", "gamma": "gamma"}


def _algo_kwargs(params: dict) -> dict:
    unknown = set(params) - set(_PARAM_KEYS)
    if unknown:
        raise ConfigError(f"unknown algorithm parameters: {', '.join(sorted(unknown))}")
    return {_PARAM_KEYS[k]: v for k, v in params.items()}


def run_experiment(config_file, out_dir, workers: int = 1, wall_time: bool = True) -> list:
    """Run every (problem, algorithm, seed) cell of a JSON experiment file.

    The file holds ``{"problems": [...], "algos": [{"name", "params"}],
    "seeds": [...], "iters": T, "cadence": c}``. Each cell writes
    ``p<i>-a<j>-<name>-s<seed>.csv`` to ``out_dir``; ``summary.csv`` gets one
    line per cell. A failing cell is recorded with status ``error`` and does
    not stop the others. Returns the summary rows.
    """
    config_file = Path(config_file)
    try:
        spec = json.loads(config_file.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_file}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iters = int(spec.get("iters", 1000))
    cadence = spec.get("cadence")
    seeds = spec.get("seeds", [0])
    summary = []
    for pi, pspec in enumerate(spec.get("problems", [])):
        try:
            problem, perr = _load_problem_spec(pspec, config_file.parent), None
        except Exception as exc:  # noqa: BLE001 - isolate per-problem failures
            problem, perr = None, f"{type(exc).__name__}: {exc}"
        for ai, aspec in enumerate(spec.get("algos", [])):
            name = aspec.get("name", "?")
            for seed in seeds:
                row = {"problem": pi, "algo": ai, "name": name, "seed": seed}
                fname = f"p{pi}-a{ai}-{name}-s{seed}.csv"
                try:
                    if perr:
                        raise RuntimeError(perr)
                    kwargs = _algo_kwargs(aspec.get("params", {}))
                    trace = solve(problem, name, iters=iters, seed=int(seed), cadence=cadence,
                                  workers=workers, **kwargs)
                    trace.to_csv(out / fname, wall_time=wall_time)
                    last = trace.rows[-1] if trace.rows else None
                    row.update(status="ok", rows=len(trace), trace=fname, error="")
                    for col in ("obj_last", "obj_erg", "feas_last", "feas_erg"):
                        row[col] = format(getattr(last, col), ".17g") if last else ""
                except Exception as exc:  # noqa: BLE001 - isolate per-cell failures
                    log.error("cell %s failed: %s", fname, exc)
                    row.update(status="error", rows=0, trace="", error=f"{type(exc).__name__}: {exc}")
                summary.append(row)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, restval="")
        w.writeheader()
        w.writerows(summary)
    return summary

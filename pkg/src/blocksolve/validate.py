"""Parameter rules and proximal-weight bounds for each regime.

Every matrix condition on the proximal weights is discharged through a
scalar sufficient bound on the per-block weights ``eta_i`` (x side) and
``eta'_j`` (y side):

* no y: ``eta_i >= L_f + n rho_x ||A_i||^2`` for every block, or
  ``eta_i >= L_f + rho_x lmax(A'A)`` for every block; either family makes
  ``eta_I I - rho_x A_I'A_I >= L_f I`` for every sampled set ``I``.
* single y: ``eta_i >= L_f + rho_x lmax(A'A)`` and
  ``eta' >= L_g/theta + (rho/theta^4 - rho/theta^2 + rho_y) lmax(B'B)``.
* multi x/y: ``eta_i >= (2-theta)((1-theta)/theta^2 + 1) n rho_x ||A_i||^2 + L_f``
  and ``eta'_j >= (2-theta)/theta^2 m rho_y ||B_j||^2 + L_g``.
* stochastic: ``eta_i >= L_f + rho lmax(A'A)`` with ``rho_x == rho``.

Spectral quantities come from power iteration, which approaches from
below, so they are inflated by :data:`~blocksolve.problem.LAMBDA_SAFETY`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import ConfigError, Regime, SolverConfig
from .problem import LAMBDA_SAFETY, ConstrainedProblem

__all__ = ["balanced_rho_x", "Violation", "ValidationReport", "derive_params", "derive_stochastic_params",
           "validate_config", "validate_stochastic", "x_weight_coefficient",
           "y_weight_coefficient"]

RATIO_RTOL = 1e-12


@dataclass
class Violation:
    condition: str
    lhs: float
    rhs: float
    message: str
    block: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"condition": self.condition, "lhs": self.lhs, "rhs": self.rhs,
             "message": self.message}
        if self.block is not None:
            d["block"] = self.block
        return d


@dataclass
class ValidationReport:
    """Outcome of a validation; ``ok`` is true exactly when there are no violations."""

    regime: Regime
    violations: List[Violation] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    suggested: Optional[SolverConfig] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "ok": self.ok,
            "violations": [v.to_dict() for v in self.violations],
            "warnings": list(self.warnings),
            "suggested": self.suggested.to_dict() if self.suggested is not None else None,
        }

    def to_json(self) -> str:
        from .io import dumps_json
        return dumps_json(self.to_dict(), indent=1)

    def to_text(self) -> str:
        lines = [f"regime: {self.regime.value}", f"ok: {'yes' if self.ok else 'no'}"]
        for v in self.violations:
            where = f" [block {v.block}]" if v.block is not None else ""
            lines.append(f"violation {v.condition}{where}: {v.message} "
                         f"(lhs={v.lhs:.6g}, rhs={v.rhs:.6g})")
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def x_weight_coefficient(theta: float) -> float:
    """``(2 - theta)((1 - theta)/theta^2 + 1)``, the multi x/y factor on ``n rho_x ||A_i||^2``."""
    return (2.0 - theta) * ((1.0 - theta) / theta ** 2 + 1.0)


def y_weight_coefficient(theta: float) -> float:
    """``(2 - theta)/theta^2``, the multi x/y factor on ``m rho_y ||B_j||^2``."""
    return (2.0 - theta) / theta ** 2


class _Spectra:
    """Inflated spectral quantities of a problem, computed on demand."""

    def __init__(self, problem: ConstrainedProblem):
        self.problem = problem
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = LAMBDA_SAFETY * fn()
        return self._cache[key]

    def a_block(self):
        A = self.problem.x_map
        return self._get("a_block", lambda: np.array(
            [A.spectral_norm_sq(i) for i in range(len(A.blocks))]))

    def a_full(self):
        return self._get("a_full", self.problem.x_map.full_spectral_norm_sq)

    def b_block(self):
        B = self.problem.y_map
        return self._get("b_block", lambda: np.array(
            [B.spectral_norm_sq(j) for j in range(len(B.blocks))]))

    def b_full(self):
        return self._get("b_full", self.problem.y_map.full_spectral_norm_sq)


def _check_shape(problem, regime, n, m):
    N, M = problem.num_x_blocks, problem.num_y_blocks
    if not 1 <= n <= N:
        raise ConfigError(f"sample size n={n} outside 1..N={N} (uniform rule needs 1 <= n <= N)")
    if regime is Regime.NO_Y:
        if problem.has_y:
            raise ConfigError("regime no-y needs a problem without y blocks")
        return
    if not problem.has_y:
        raise ConfigError(f"regime {regime.value} needs y blocks")
    if regime is Regime.SINGLE_Y and m != M:
        raise ConfigError(f"regime single-y updates every y block: need m == M={M}, got m={m}")
    if regime is Regime.MULTI_XY:
        if not 1 <= m <= M:
            raise ConfigError(f"sample size m={m} outside 1..M={M}")
        if n * M != m * N:
            raise ConfigError(f"regime multi-xy needs n/N == m/M, got {n}/{N} and {m}/{M}")


def balanced_rho_x(problem: ConstrainedProblem) -> float:
    """``L_f / lmax(A'A)``: the penalty that puts the smooth part and the
    augmented term on the same curvature scale (1.0 when either is zero)."""
    lf = problem.f.lipschitz
    a = problem.x_map.full_spectral_norm_sq()
    if lf > 0 and a > 0:
        return float(lf / a)
    return 1.0


def derive_params(problem: ConstrainedProblem, regime, n: int, m: int = 0, rho_x: float = 1.0,
                  max_iters: int = 1000, seed: int = 0) -> SolverConfig:
    """Smallest per-block weights meeting the regime's sufficient bounds.

    ``rho`` and ``rho_y`` follow the regime's ratio rule from ``rho_x``.
    For the single-y regime ``m`` is forced to ``M``.
    """
    regime = Regime.parse(regime)
    if rho_x < 0:
        raise ConfigError("rho_x must be nonnegative")
    if regime is Regime.SINGLE_Y:
        m = problem.num_y_blocks
    _check_shape(problem, regime, n, m)
    N = problem.num_x_blocks
    theta = n / N
    L_f, L_g = problem.f.lipschitz, problem.g.lipschitz
    sp = _Spectra(problem)
    if regime is Regime.NO_Y:
        rho = theta * rho_x
        rho_y = 0.0
        eta_x = L_f + n * rho_x * sp.a_block()
        eta_y = np.zeros(0)
        m = 0
    elif regime is Regime.SINGLE_Y:
        rho = rho_y = theta * rho_x
        eta_x = np.full(N, L_f + rho_x * sp.a_full())
        coef = rho / theta ** 4 - rho / theta ** 2 + rho_y
        eta_y = np.full(problem.num_y_blocks, L_g / theta + coef * sp.b_full())
    else:
        rho = theta * rho_x
        rho_y = rho * problem.num_y_blocks / m
        eta_x = x_weight_coefficient(theta) * n * rho_x * sp.a_block() + L_f
        eta_y = y_weight_coefficient(theta) * m * rho_y * sp.b_block() + L_g
    eta_x, eta_y = _positive(eta_x), _positive(eta_y)
    return SolverConfig(regime=regime, n=n, m=m, rho_x=rho_x, rho=rho, rho_y=rho_y,
                        eta_x=eta_x, eta_y=eta_y, max_iters=max_iters, seed=seed)


def derive_stochastic_params(problem: ConstrainedProblem, n: int, rho: float = 1.0,
                             max_iters: int = 1000, seed: int = 0) -> SolverConfig:
    """Weights ``eta_i = L_f + rho lmax(A'A)`` for the stochastic engine (``rho_x = rho``)."""
    _check_shape(problem, Regime.NO_Y, n, 0)
    sp = _Spectra(problem)
    eta = np.full(problem.num_x_blocks, problem.f.lipschitz + rho * sp.a_full())
    return SolverConfig(regime=Regime.NO_Y, n=n, rho_x=rho, rho=rho, eta_x=_positive(eta),
                        max_iters=max_iters, seed=seed)


def _positive(eta):
    # A zero bound (e.g. A_i = 0 and L_f = 0) still needs a positive prox weight.
    eta = np.asarray(eta, dtype=np.float64)
    return np.where(eta > 0, eta, np.finfo(float).tiny ** 0.5)


def _close(a, b):
    return abs(a - b) <= RATIO_RTOL * max(abs(a), abs(b), 1e-300)


def _weight_violations(condition, side, eta, bound):
    out = []
    for i, (e, r) in enumerate(zip(eta, bound)):
        if e < r:
            out.append(Violation(condition, float(e), float(r),
                                 f"{side} weight {e:.6g} below bound {r:.6g}", block=i))
    return out


def validate_config(problem: ConstrainedProblem, config: SolverConfig) -> ValidationReport:
    """Check ratio rules and weight bounds; never raises for a bad config."""
    regime = config.regime
    report = ValidationReport(regime)
    v = report.violations
    N, M = problem.num_x_blocks, problem.num_y_blocks
    n, m = config.n, config.m
    if config.N != N:
        v.append(Violation("x-weight-count", config.N, N, f"expected {N} x weights, got {config.N}"))
    if problem.has_y and config.M != M:
        v.append(Violation("y-weight-count", config.M, M, f"expected {M} y weights, got {config.M}"))
    try:
        _check_shape(problem, regime, n, m)
    except ConfigError as exc:
        v.append(Violation("sample-shape", n / max(N, 1), m / max(M, 1), str(exc)))
    if v:
        return report
    theta = n / N
    if config.rho == 0.0:
        report.warnings.append("rho = 0: the multiplier is never updated")
    if config.rho_x == 0.0:
        report.warnings.append("rho_x = 0: the x update ignores the augmented term")
    L_f, L_g = problem.f.lipschitz, problem.g.lipschitz
    sp = _Spectra(problem)

    if regime is Regime.NO_Y:
        if not _close(config.rho, theta * config.rho_x):
            v.append(Violation("rho-rule", config.rho, theta * config.rho_x,
                               "need rho == (n/N) rho_x"))
        per_block = L_f + n * config.rho_x * sp.a_block()
        if np.any(config.eta_x < per_block):
            glob = L_f + config.rho_x * sp.a_full()
            if np.any(config.eta_x < glob):
                v.extend(_weight_violations("x-weight", "x", config.eta_x, per_block))
    elif regime is Regime.SINGLE_Y:
        target = theta * config.rho_x
        if not _close(config.rho, target):
            v.append(Violation("rho-rule", config.rho, target, "need rho == (n/N) rho_x"))
        if not _close(config.rho_y, target):
            v.append(Violation("rho-y-rule", config.rho_y, target, "need rho_y == (n/N) rho_x"))
        v.extend(_weight_violations("x-weight", "x", config.eta_x,
                                    np.full(N, L_f + config.rho_x * sp.a_full())))
        coef = config.rho / theta ** 4 - config.rho / theta ** 2 + config.rho_y
        v.extend(_weight_violations("y-weight", "y", config.eta_y,
                                    np.full(M, L_g / theta + coef * sp.b_full())))
    else:
        if not _close(config.rho, n * config.rho_x / N):
            v.append(Violation("rho-rule", config.rho, n * config.rho_x / N,
                               "need rho == n rho_x / N"))
        if not _close(config.rho, m * config.rho_y / M):
            v.append(Violation("rho-y-rule", config.rho, m * config.rho_y / M,
                               "need rho == m rho_y / M"))
        v.extend(_weight_violations(
            "x-weight", "x", config.eta_x,
            x_weight_coefficient(theta) * n * config.rho_x * sp.a_block() + L_f))
        v.extend(_weight_violations(
            "y-weight", "y", config.eta_y,
            y_weight_coefficient(theta) * m * config.rho_y * sp.b_block() + L_g))

    if not report.ok:
        try:
            report.suggested = derive_params(problem, regime, n, m, config.rho_x,
                                             config.max_iters, config.seed)
        except ConfigError:
            pass
    return report


def validate_stochastic(problem: ConstrainedProblem, config: SolverConfig, schedule=None,
                        t_max: Optional[int] = None) -> ValidationReport:
    """Checks for the stochastic engine, including the step-size conditions when given a schedule."""
    report = ValidationReport(Regime.NO_Y)
    v = report.violations
    if problem.has_y:
        v.append(Violation("no-y", problem.num_y_blocks, 0,
                           "the stochastic engine needs a problem without y blocks"))
        return report
    N = problem.num_x_blocks
    if config.N != N or not 1 <= config.n <= N:
        v.append(Violation("sample-shape", config.n, N,
                           f"need N={N} weights and 1 <= n <= N (uniform rule)"))
        return report
    if not _close(config.rho_x, config.rho):
        v.append(Violation("rho-rule", config.rho_x, config.rho, "need rho_x == rho"))
    if config.rho == 0.0:
        report.warnings.append("rho = 0: the multiplier is never updated")
    sp = _Spectra(problem)
    bound = np.full(N, problem.f.lipschitz + config.rho * sp.a_full())
    v.extend(_weight_violations("x-weight", "x", config.eta_x, bound))
    if schedule is not None and config.rho > 0:
        from .stochastic import schedule_check
        res = schedule_check(schedule, t_max or max(config.max_iters, 1), config.n / N, config.rho)
        if not res.ok:
            fv = res.first_violation
            v.append(Violation(f"schedule-{fv['condition']}", fv["lhs"], fv["rhs"],
                               f"step-size condition fails at k={fv['k']}"))
    if not report.ok:
        report.suggested = derive_stochastic_params(problem, config.n, config.rho,
                                                    config.max_iters, config.seed)
    return report

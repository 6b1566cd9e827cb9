"""Stochastic-gradient variant with a diminishing proximal weight.

Sampled blocks take the prox-linear step with a noisy gradient and the
extra proximal weight ``1/alpha_k``; the multiplier step is damped by
``1 - (N - n) alpha_{k+1} / (N alpha_k)``. Only problems without y are
handled, and the start point must satisfy ``Ax0 = b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .config import Regime, SolverConfig
from .engine import (ErgodicPoint, IterateState, _begin_step, _sweep_x, default_cadence, drive,
                     init_state)
from .linalg import BlockVector
from .problem import ConstrainedProblem, SmoothOracle
from .sampler import make_streams, sample_subset, sample_subsets

__all__ = [
    "StochasticOracle",
    "StepSchedule",
    "ScheduleReport",
    "InfeasibleStartError",
    "alpha_at",
    "multiplier_factor",
    "stochastic_step",
    "weighted_ergodic",
    "schedule_check",
    "run_stochastic",
]

FEAS_START_TOL = 1e-9


class InfeasibleStartError(ValueError):
    """The start point violates ``Ax0 = b``."""


class StochasticOracle:
    """Unbiased noisy gradients ``G = grad f(x) + delta``.

    ``kind="gaussian"``: ``delta`` has i.i.d. normal entries with standard
    deviation ``sigma / sqrt(dim)``, so ``E||delta||^2 = sigma^2``.
    ``kind="custom"``: ``sampler(x, rng)`` returns ``delta``.
    """

    def __init__(self, base: SmoothOracle, sigma: float = 0.0, kind: str = "gaussian",
                 sampler: Optional[Callable] = None):
        if kind not in ("gaussian", "custom"):
            raise ValueError(f"unknown noise kind {kind!r}")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if kind == "custom" and sampler is None:
            raise ValueError("custom noise needs a sampler")
        self.base = base
        self.sigma = float(sigma)
        self.kind = kind
        self._sampler = sampler

    def noise(self, x: np.ndarray, rng) -> np.ndarray:
        if self.kind == "custom":
            return np.asarray(self._sampler(x, rng), dtype=np.float64).reshape(-1)
        dim = x.shape[0]
        if self.sigma == 0.0:
            return np.zeros(dim)
        return (self.sigma / math.sqrt(dim)) * rng.standard_normal(dim)

    def sample(self, x: np.ndarray, rng) -> np.ndarray:
        """A full noisy gradient at the flat point ``x``."""
        return self.base.grad(x) + self.noise(x, rng)


@dataclass(frozen=True)
class StepSchedule:
    """``alpha_k = alpha0 / sqrt(k)`` (``"sqrtk"``) or ``alpha0 / sqrt(horizon)`` (``"fixed"``).

    For ``"sqrtk"`` the value at ``k = 0`` is ``alpha0``. The fixed schedule
    is constant for every ``k``, including 0.
    """

    kind: str = "sqrtk"
    alpha0: float = 1.0
    horizon: Optional[int] = None

    def __post_init__(self):
        kind = {"sqrtK": "sqrtk", "fixedHorizon": "fixed"}.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in ("sqrtk", "fixed"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if kind == "fixed" and not (self.horizon and self.horizon >= 1):
            raise ValueError("fixed schedule needs a horizon >= 1")

    def alpha(self, k: int) -> float:
        return alpha_at(self, k)

    def ratio(self, k: int) -> float:
        """``alpha_k / alpha_{k-1}`` along the closed-form sequence.

        For ``"sqrtk"`` this is ``sqrt((k-1)/k)``, which is 0 at ``k = 1``:
        the formula continued to ``k = 0`` gives an infinite ``alpha_0``.
        """
        if self.kind == "fixed":
            return 1.0
        return math.sqrt((k - 1) / k)


def alpha_at(schedule: StepSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("k must be nonnegative")
    if schedule.kind == "fixed":
        return schedule.alpha0 / math.sqrt(schedule.horizon)
    return schedule.alpha0 if k == 0 else schedule.alpha0 / math.sqrt(k)


def multiplier_factor(schedule: StepSchedule, k: int, N: int, n: int) -> float:
    """``1 - (N - n) alpha_{k+1} / (N alpha_k)``."""
    return 1.0 - (N - n) * alpha_at(schedule, k + 1) / (N * alpha_at(schedule, k))


def _check_no_y(problem: ConstrainedProblem):
    if problem.has_y:
        raise ValueError("the stochastic engine handles g = v = 0 only; "
                         "use the deterministic engine for problems with y blocks")


def check_start(problem: ConstrainedProblem, x0) -> np.ndarray:
    x0 = np.asarray(x0.data if isinstance(x0, BlockVector) else x0, dtype=np.float64)
    viol = float(np.linalg.norm(problem.x_map.dense @ x0 - problem.b))
    if viol > FEAS_START_TOL:
        raise InfeasibleStartError(f"start point violates Ax0 = b by {viol:.3e}")
    return x0


def stochastic_step(state: IterateState, problem: ConstrainedProblem, config: SolverConfig,
                    schedule: StepSchedule, oracle: StochasticOracle, rng, noise_rng,
                    workers: int = 1, I=None) -> IterateState:
    """One iteration; ``I`` overrides the sampled blocks when given.

    The x-subset comes from ``rng``; the noise vector (always the full
    dimension, so enabling noise never shifts block selection) comes from
    ``noise_rng``. The augmented term uses ``config.rho``.
    """
    _check_no_y(problem)
    if state.k == 0:
        check_start(problem, state.x)
    k = state.k
    N = problem.num_x_blocks
    if I is None:
        I = sample_subset(rng, N, config.n)
    I = np.asarray(I, dtype=np.int64)
    alpha = alpha_at(schedule, k)
    _begin_step(state, alpha)
    delta = oracle.noise(state.x.data, noise_rng)
    part = state.x.partition
    grads = [g + delta[part.slice(i)] for i, g in zip(I, oracle.base.partial_grad(state.x, I))]
    _sweep_x(state, problem, config, I, grads, 1.0 / alpha, config.rho, workers)
    state.lam -= multiplier_factor(schedule, k, N, config.n) * config.rho * state.r
    state.k += 1
    return state


def weighted_ergodic(state: IterateState, schedule: StepSchedule, theta: float) -> ErgodicPoint:
    """``(alpha_{t+1} x^{t+1} + theta sum_{k<=t} alpha_k x^k) / (alpha_{t+1} + theta sum alpha_k)``."""
    if state.k < 1:
        raise ValueError("ergodic point is undefined before the first step")
    t = state.k - 1
    a_last = alpha_at(schedule, t + 1)
    denom = a_last + theta * state.weight_total
    x_hat = (a_last * state.x.data + theta * state.erg_x) / denom
    return ErgodicPoint(BlockVector(state.x.partition, x_hat), None, t)


@dataclass
class ScheduleReport:
    """Outcome of :func:`schedule_check`.

    ``ok`` requires the monotonicity condition for every ``k <= t_max`` and
    the horizon condition at ``t = t_max``. ``horizon_failures`` lists every
    ``t <= t_max`` at which the horizon condition fails.
    """

    ok: bool
    t_max: int
    first_violation: Optional[dict] = None
    horizon_failures: list = field(default_factory=list)


def _beta(schedule, k, theta, rho):
    # alpha_k / ((1 - alpha_k (1 - theta) / alpha_{k-1}) rho)
    return alpha_at(schedule, k) / ((1.0 - schedule.ratio(k) * (1.0 - theta)) * rho)


def _over_ratio(schedule, k):
    # alpha_{k-1} / alpha_k; infinite where the ratio vanishes
    q = schedule.ratio(k)
    return math.inf if q == 0.0 else 1.0 / q


def schedule_check(schedule: StepSchedule, t_max: int, theta: float, rho: float) -> ScheduleReport:
    """Evaluate the step-size conditions numerically.

    Monotonicity, for ``k = 1..t_max``::

        a_{k-1} b_k / (2 a_k) + (1-theta) b_{k+1} / 2
            - a_k b_{k+1} / (2 a_{k+1}) - (1-theta) b_k / 2 >= 0

    Horizon, at ``t``::

        a_t / (2 rho) >= | a_{t-1} b_t / a_t - (1-theta) b_t - a_t / rho |

    with ``b_k = a_k / ((1 - a_k (1-theta) / a_{k-1}) rho)``. The ratios
    ``a_{k-1}/a_k`` follow the schedule's closed form (see
    :meth:`StepSchedule.ratio`).
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if not 0 < theta <= 1 or not rho > 0:
        raise ValueError("need 0 < theta <= 1 and rho > 0")
    one_m = 1.0 - theta
    first = None
    for k in range(1, t_max + 1):
        bk, bk1 = _beta(schedule, k, theta, rho), _beta(schedule, k + 1, theta, rho)
        terms = (_over_ratio(schedule, k) * bk / 2, one_m * bk1 / 2,
                 -_over_ratio(schedule, k + 1) * bk1 / 2, -one_m * bk / 2)
        lhs = math.fsum(terms)
        scale = max(abs(t) for t in terms)
        if lhs < -1e-12 * scale:
            first = {"condition": "monotonicity", "k": k, "lhs": lhs, "rhs": 0.0}
            break

    def horizon(t):
        a = alpha_at(schedule, t)
        bt = _beta(schedule, t, theta, rho)
        over = _over_ratio(schedule, t)
        rhs = math.inf if over == math.inf else abs(math.fsum((over * bt, -one_m * bt, -a / rho)))
        lhs = a / (2 * rho)
        return lhs, rhs, lhs >= rhs - 1e-12 * lhs

    failures = [t for t in range(1, t_max + 1) if not horizon(t)[2]]
    lhs, rhs, ok_h = horizon(t_max)
    if first is None and not ok_h:
        first = {"condition": "horizon", "k": t_max, "lhs": lhs, "rhs": rhs}
    return ScheduleReport(ok=first is None, t_max=t_max, first_violation=first,
                          horizon_failures=failures)


def _kernel_advance(problem, config, schedule, oracle, rng, noise_rng, workers, pure):
    mod = kernels.select(pure)
    packed = kernels.pack_problem(problem)
    N, n = problem.num_x_blocks, config.n
    dim = problem.x_partition.total_dim
    eta = np.ascontiguousarray(config.eta_x)
    sd = oracle.sigma / math.sqrt(dim)

    def advance(state, count):
        k0 = state.k
        if k0 == 0:
            check_start(problem, state.x)
        samples = sample_subsets(rng, N, n, count)
        ks = range(k0, k0 + count)
        alphas = np.array([alpha_at(schedule, k) for k in ks])
        dual = np.array([multiplier_factor(schedule, k, N, n) * config.rho for k in ks])
        erg_w = alphas.copy()
        if k0 == 0:
            erg_w[0] = 0.0
        if sd > 0.0:
            noise = sd * noise_rng.standard_normal((count, dim))
        else:
            noise = np.zeros((0, 0))
        mod.run_x_chunk(state.x.data, state.erg_x, state.lam, state.r, packed["Q"], packed["c"],
                        packed["At"], packed["offsets"], samples, eta, packed["prox_kind"],
                        packed["prox_tau"], packed["lo"], packed["hi"], config.rho,
                        dual, 1.0 / alphas, erg_w, noise, int(workers))
        for w in erg_w:
            if w:
                state.add_weight(float(w))
        state.k += count

    return advance


def run_stochastic(problem: ConstrainedProblem, config: SolverConfig, schedule: StepSchedule,
                   oracle: Optional[StochasticOracle] = None, x0=None,
                   callbacks: Sequence[Callable] = (), cadence: Optional[int] = None,
                   workers: int = 1, use_kernel: Optional[bool] = None, pure: bool = False):
    """Run ``config.max_iters`` stochastic iterations from a feasible ``x0``.

    ``x0`` defaults to the problem's stored feasible point. Sampling and
    noise use the first two child streams of ``config.seed``.
    """
    _check_no_y(problem)
    if oracle is None:
        oracle = StochasticOracle(problem.f, 0.0)
    if x0 is None:
        if problem.x_feasible is None:
            raise InfeasibleStartError("no start point given and the problem stores none")
        x0 = problem.x_feasible
    state = init_state(problem, x0)
    check_start(problem, state.x)
    if config.n > problem.num_x_blocks:
        raise ValueError(f"sample size n={config.n} exceeds N={problem.num_x_blocks} "
                         "(uniform rule needs n <= N)")
    streams = make_streams(config.seed)
    rng, noise_rng = streams["sampling"], streams["noise"]
    cadence = cadence or default_cadence(problem.num_x_blocks, config.n)
    if use_kernel is None:
        use_kernel = (kernels.kernel_eligible(problem) and oracle.kind == "gaussian"
                      and oracle.base is problem.f)
    if use_kernel:
        advance = _kernel_advance(problem, config, schedule, oracle, rng, noise_rng, workers, pure)
    else:
        def advance(state, count):
            for _ in range(count):
                stochastic_step(state, problem, config, schedule, oracle, rng, noise_rng, workers)

    trace = drive(problem, state, config.max_iters, cadence, advance,
                  lambda s: weighted_ergodic(s, schedule, config.theta), config.theta, callbacks)
    trace.info.update(kernel=("compiled" if use_kernel and kernels.select(pure).COMPILED
                              else "numpy" if use_kernel else "generic"))
    return trace

"""Randomized primal-dual block coordinate solvers for linearly constrained
multi-block convex optimization.

The deterministic-gradient engine lives in :mod:`blocksolve.engine`, the
stochastic-gradient engine in :mod:`blocksolve.stochastic`, parameter rules
in :mod:`blocksolve.validate`, reference methods in
:mod:`blocksolve.baselines` and experiment tooling in :mod:`blocksolve.harness`.
"""

__version__ = "0.1.0"

from .config import ConfigError, Regime, SolverConfig
from .engine import ErgodicPoint, IterateState, ergodic_point, init_state, run, step
from .harness import ReferenceSolution, reference_solve, slope_fit, solve
from .io import load_problem, save_problem
from .linalg import BlockLinearMap, BlockPartition, BlockVector
from .problem import (ConstrainedProblem, ProxOracle, SmoothOracle, gen_classo, gen_ncqp,
                      objective, feas_violation)
from .stochastic import StepSchedule, StochasticOracle, run_stochastic, schedule_check
from .validate import ValidationReport, derive_params, validate_config

__all__ = [
    "__version__",
    "BlockPartition", "BlockVector", "BlockLinearMap",
    "SmoothOracle", "ProxOracle", "ConstrainedProblem", "gen_ncqp", "gen_classo",
    "objective", "feas_violation", "load_problem", "save_problem",
    "Regime", "SolverConfig", "ConfigError",
    "IterateState", "ErgodicPoint", "init_state", "step", "ergodic_point", "run",
    "StochasticOracle", "StepSchedule", "schedule_check", "run_stochastic",
    "ValidationReport", "derive_params", "validate_config",
    "ReferenceSolution", "reference_solve", "slope_fit", "solve",
]

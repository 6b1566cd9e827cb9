import numpy as np
import pytest
from hypothesis import settings

from blocksolve.linalg import BlockLinearMap, BlockPartition
from blocksolve.problem import ConstrainedProblem, ProxOracle, SmoothOracle, gen_ncqp

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# Filled by tests/test_acceptance.py; printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def scalar_problem(a=1.0, b=0.0, Q=None, c=0.0, prox=None, lipschitz=None):
    """One 1-D x block, one constraint row ``a x = b``."""
    part = BlockPartition((1,))
    f = SmoothOracle.zero()
    if Q is not None:
        f = SmoothOracle.quadratic([[Q]], [c], lipschitz=Q if lipschitz is None else lipschitz)
    return ConstrainedProblem(x_map=BlockLinearMap([np.array([[a]])]), b=np.array([b]), f=f,
                              x_prox=[prox or ProxOracle("zero")])


@pytest.fixture
def small_ncqp():
    return gen_ncqp(6, 12, 4, 0, 7)


@pytest.fixture(scope="session")
def ncqp42():
    return gen_ncqp(20, 100, 20, 0, 42)

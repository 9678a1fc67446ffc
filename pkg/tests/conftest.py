import numpy as np
import pytest

from pdicuts.disjunction import Disjunction, Term
from pdicuts.model import Instance


def two_var(ub2: float = 1.0, rhs: float = -2.0, name: str = "two") -> Instance:
    """min -x1 - x2 s.t. 2x1 + x2 <= 2, x in [0,1]^2, x1 integer."""
    return Instance.from_parts(name, [[-2.0, -1.0]], [rhs], [-1.0, -1.0], [0, 0], [1.0, ub2], [0])


def split() -> Disjunction:
    return Disjunction((Term.from_dict({0: (None, 0.0)}, 0), Term.from_dict({0: (1.0, None)}, 1)), "split")


@pytest.fixture
def k():
    return two_var()


@pytest.fixture
def disj():
    return split()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])

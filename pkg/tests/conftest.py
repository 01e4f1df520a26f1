import numpy as np
import pytest

from lq_sweep.problem import LqProblem

ACCEPTANCE_LINES = []


def p1_problem(**changes):
    base = dict(F=[[0.0]], G=[[1.0]], R=[[1.0]], C=[[1.0]], Phi1=[[1.0]], Phi2=[[1.0]], q=[1.0], t0=0.0, tau=1.0)
    base.update(changes)
    return LqProblem(**base)


def p2_problem():
    return LqProblem(F=[[-1.0]], G=[[1.0]], R=[[0.0]], C=[[1.0]],
                     Phi1=[[1.0], [0.0]], Phi2=[[0.0], [-1.0]], q=[1.0, 1.0], t0=0.0, tau=1.0)


@pytest.fixture
def p1():
    return p1_problem()


@pytest.fixture
def p2():
    return p2_problem()


@pytest.fixture
def p3():
    return p1_problem(q=[0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from distsynth.abstraction import build_abstraction  # noqa: E402
from distsynth.fixtures import S1_PROPS, S1_SPEC, s1_params, s1_system  # noqa: E402
from distsynth.game import synthesize  # noqa: E402
from distsynth.logic.formula import parse, tr_delta, tr_eps  # noqa: E402

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def s1():
    return s1_system()


@pytest.fixture(scope="session")
def s1_abstraction(s1):
    return build_abstraction(s1, s1_params(s1))


@pytest.fixture(scope="session")
def s1_phi0():
    return parse(S1_SPEC, S1_PROPS)


@pytest.fixture(scope="session")
def s1_synthesis(s1_abstraction, s1_phi0):
    p = s1_abstraction.params
    psi = tr_eps(tr_delta(s1_phi0, p.delta), p.eps)
    return synthesize(s1_abstraction, psi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

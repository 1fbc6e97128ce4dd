import sys

import numpy as np
import pytest

from markov_clt.markov import FiniteMarkovChain
from markov_clt.td import TDModel

TWO_STATE_P = [[0.8, 0.2], [0.3, 0.7]]


def random_chain(gen, S, sparsity=0.0):
    """Random chain with a positive diagonal and a full cycle, hence irreducible and aperiodic."""
    P = gen.random((S, S)) * (gen.random((S, S)) >= sparsity)
    P[np.arange(S), np.arange(S)] += 0.1
    P[np.arange(S), (np.arange(S) + 1) % S] += 0.1
    return FiniteMarkovChain(P / P.sum(axis=1, keepdims=True))


@pytest.fixture
def two_state():
    return FiniteMarkovChain(TWO_STATE_P)


@pytest.fixture
def scalar_td_model():
    # pi = (0.5, 0.5), A_bar = 2, theta* = 1
    return TDModel(FiniteMarkovChain([[0.7, 0.3], [0.3, 0.7]]), [1.0, 3.0], [-2.0, -2.0], 0.75)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import sys

import numpy as np
import pytest

from rwde.dirichlet import Weights
from rwde.graph import FiniteGraph

CANONICAL = (1.3, 0.05, 0.05, 0.05, 0.05, 0.05)


@pytest.fixture
def canonical():
    return Weights(CANONICAL)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def star(weights, centre="v"):
    """One vertex with an outgoing edge of each weight to its own leaf."""
    return FiniteGraph([(centre, f"leaf{i}", w) for i, w in enumerate(weights)])


def bidirected_triangle(w=1.0):
    return FiniteGraph([(0, 1, w), (1, 0, w), (1, 2, w), (2, 1, w), (2, 0, w), (0, 2, w)])


def within_sigma(estimate, stderr, target, n_sigma=4.0):
    return abs(estimate - target) <= n_sigma * stderr


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.REPORT):
        name, ok, detail, secs = mod.REPORT[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {num:>2}. {name}: {detail}  [{secs:.1f} s]")

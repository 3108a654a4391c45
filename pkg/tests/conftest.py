import sys

import numpy as np
import pytest
from hypothesis import settings

from cmefsp import MassAction, Reaction, ReactionNetwork

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_generator(rng, n, density=0.1, closed=True):
    """Dense random CTMC generator with columns as source states."""
    A = rng.exponential(1.0, (n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(A, 0.0)
    leak = rng.exponential(0.2, n) if not closed else 0.0
    A -= np.diag(A.sum(axis=0) + leak)
    return A


def random_probability(rng, n):
    v = rng.exponential(1.0, n)
    return v / v.sum()


def pure_birth(lam):
    return ReactionNetwork(["X"], [Reaction({}, {0: 1}, MassAction(lam))])


def pure_death(mu):
    return ReactionNetwork(["X"], [Reaction({0: 1}, {}, MassAction(mu))])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, detail = results[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")

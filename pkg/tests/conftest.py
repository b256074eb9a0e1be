import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("mgot", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("mgot")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_marginal(rng, n):
    w = rng.random(n) + 0.1
    return w / w.sum()


def random_graph(rng, n):
    X = rng.random((n, n))
    A = (X + X.T) / 2
    np.fill_diagonal(A, 0.0)
    return A


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import settings

from multilens.cli import sample_ensemble
from multilens.ensemble import Ensemble, make_ensemble

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def single():
    return Ensemble.single([1.0], [0j])


@pytest.fixture
def binary():
    return make_ensemble([([0.5, 0.5], [-0.5, 0.5])])


def random_ensemble(rng, K, gmax=3):
    return sample_ensemble(rng, K, gmax)


def random_points(rng, n, radius=2.0):
    r = radius * np.sqrt(rng.uniform(size=n))
    return r * np.exp(2j * np.pi * rng.uniform(size=n))


# acceptance criteria report one line each; printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

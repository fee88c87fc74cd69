import math

import numpy as np
import pytest

from distcaputo.fraccalc import TimeGrid
from distcaputo.kernels import build_table, default_grading
from distcaputo.weight import WeightFunction, analyze, bump, indicator, uniform

# the four weights of the resolvent and kernel-bound checks
TEST_WEIGHTS = {
    "uniform": lambda: uniform(),
    "linear": lambda: WeightFunction.analytic("2*alpha"),
    "indicator": lambda: indicator(0.4, 0.6),
    "bump": lambda: bump(0.5, 0.01),
}


def graded(mu, M=512, T=1.0):
    return TimeGrid(T, M, default_grading(analyze(mu).gamma))


class TableCache:
    """Builds each (weight, kernel, M) table once per session."""

    def __init__(self):
        self._store = {}
        self.timings = {}

    def get(self, name, kernel="g", M=512):
        key = (name, kernel, M)
        if key not in self._store:
            import time

            mu = TEST_WEIGHTS[name]()
            t0 = time.perf_counter()
            tab = build_table(mu, graded(mu, M), kernel)
            self.timings[key] = time.perf_counter() - t0
            self._store[key] = tab
        return self._store[key]


@pytest.fixture(scope="session")
def tables():
    return TableCache()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


def phi1(x):
    return math.sqrt(2 / math.pi) * np.sin(x)

import numpy as np
import pytest

from agwnn.dataset import SpatialDataset

_RESULTS = []


class CriterionLog:
    def __init__(self, name):
        self.name = name

    def check(self, label, ok, detail=""):
        _RESULTS.append((self.name, label, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {self.name} {label}: {detail}")
        return bool(ok)


@pytest.fixture
def criterion(request):
    return CriterionLog


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, label, ok, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name} {label}: {detail}")


def random_dataset(rng, n=30, p=2, spread=10.0):
    coords = rng.uniform(0, spread, size=(n, 2))
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p + 1)
    y = beta[0] + X @ beta[1:] + 0.3 * rng.normal(size=n) + np.sin(coords[:, 0])
    return SpatialDataset.from_arrays(coords, X, y)


@pytest.fixture
def small_dataset():
    return random_dataset(np.random.default_rng(12), n=30, p=2)

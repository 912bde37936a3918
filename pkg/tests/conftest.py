import numpy as np
import pytest

from uner.model import AreaData, UnitDataset


def area_with_residual(n, resid, area_id=0):
    """Area with q=1, x = 1 and ybar = resid, so ybar - xbar'beta = resid at beta = 0."""
    y = np.full(n, float(resid))
    if n > 1:
        dev = np.linspace(-1.0, 1.0, n)
        y = y + dev - dev.mean()
    return AreaData(area_id, y, np.ones((n, 1)))


def random_dataset(rng, m=8, n=4, q=2, tau=0.7, p=0.7, sigma=1.0):
    ids, ys, xs = [], [], []
    beta = np.linspace(1.0, 0.5, q)
    for i in range(m):
        X = np.column_stack([np.ones(n)] + [rng.uniform(1, 2, n) for _ in range(q - 1)])
        v = rng.normal(0, tau) if rng.uniform() < p else 0.0
        ys.append(X @ beta + v + rng.normal(0, sigma, n))
        xs.append(X)
        ids += [i] * n
    return UnitDataset.from_arrays(np.concatenate(ys), np.vstack(xs), ids)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)

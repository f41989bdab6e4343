import numpy as np
import pytest

from mfpkit.data import Dataset, VariableMeta


def planted_fixture():
    """60 points on y = ln x with N(0, 0.1^2) noise, plus one far point 6 sd above the curve.

    Seed 0 was chosen after checking with full refits that deleting the far
    point (id 61) is the only deletion that changes a decision.
    """
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(1, 10, 60))
    y = np.log(x) + rng.normal(0, 0.1, 60)
    far = 50 * x.max()
    return np.append(x, far), np.append(y, np.log(far) + 0.6)


@pytest.fixture
def planted():
    return planted_fixture()


def random_fixture(seed, n=None, n_adjust=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(40, 121)) if n is None else n
    k = int(rng.integers(1, 4)) if n_adjust is None else n_adjust
    x = rng.lognormal(1.0, 0.6, n)
    adjust = rng.normal(size=(n, k))
    shape = rng.choice(["log", "quad", "linear", "null", "recip"])
    f = {"log": np.log(x), "quad": (x - 3) ** 2 / 5, "linear": 0.3 * x, "null": 0 * x, "recip": 2 / x}[shape]
    y = f + adjust @ rng.normal(0, 0.5, k) + rng.normal(0, 0.5, n)
    return x, y, adjust


def small_dataset(seed=0, n=200, signal=True):
    """Two continuous predictors, one binary and one noise variable."""
    rng = np.random.default_rng(seed)
    a = rng.lognormal(1.0, 0.5, n)
    b = rng.uniform(1, 20, n)
    c = rng.uniform(1, 5, n)
    g = rng.integers(0, 2, n).astype(float)
    y = rng.normal(0, 1, n)
    if signal:
        y = y + 1.5 * np.log(a) + 0.15 * b + 0.8 * g
    meta = (VariableMeta("y", role="outcome"), VariableMeta("a"), VariableMeta("b"),
            VariableMeta("c"), VariableMeta("g", "binary"))
    return Dataset({"y": y, "a": a, "b": b, "c": c, "g": g}, meta, provenance=f"fixture:{seed}")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from egohpo.search_space import ParameterSpec, SearchSpace


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def branin_space():
    return SearchSpace([ParameterSpec("x1", -5, 10), ParameterSpec("x2", 0, 15)])


def random_dataset(rng, n, d):
    """Smooth-ish random responses on a random unit-cube design."""
    X = rng.random((n, d))
    w = rng.normal(size=d)
    y = np.sin(3 * X @ w) + 0.5 * np.sum(X**2, axis=1)
    return X, y


# (number, title, passed, detail) tuples filled by test_acceptance.py
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}")

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gbaffinity.featurize import FeatureMatrix  # noqa: E402

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def friedman1_matrix(n_rows=2000, n_features=10, noise=1.0, seed=0) -> FeatureMatrix:
    """Friedman #1: only the first five columns matter."""
    rng = np.random.default_rng(seed)
    X = rng.random((n_rows, n_features))
    y = (
        10 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20 * (X[:, 2] - 0.5) ** 2
        + 10 * X[:, 3]
        + 5 * X[:, 4]
        + noise * rng.standard_normal(n_rows)
    )
    return FeatureMatrix([f"x{i}" for i in range(n_features)], X, y)


@pytest.fixture
def friedman1():
    return friedman1_matrix()

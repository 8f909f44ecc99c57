import os

import numpy as np
import pytest

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def two_cluster():
    """500 rows in 2-D: two Gaussian blobs plus 5% uniform outliers."""
    rng = np.random.default_rng(3)
    n_out = 25
    n_in = 475
    centers = np.array([[-2.0, -2.0], [2.0, 2.0]])
    inl = centers[rng.integers(0, 2, n_in)] + 0.3 * rng.standard_normal((n_in, 2))
    out = rng.uniform(-6, 6, size=(n_out, 2))
    # keep planted outliers away from the blobs
    far = np.min(np.linalg.norm(out[:, None, :] - centers[None], axis=-1), axis=1) > 2.0
    out = out[far]
    X = np.vstack([inl, out])
    y = np.r_[np.zeros(len(inl), int), np.ones(len(out), int)]
    return X, y


ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""
    def _report(number, ok, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])

import numpy as np
import pytest

from edsoliton.choquard import solve_ground_state
from edsoliton.radial import build_grid, default_r_max


@pytest.fixture(scope="session")
def sol2000():
    return solve_ground_state(0.5, build_grid(2000, default_r_max(0.5), 2.0))


@pytest.fixture(scope="session")
def sol500():
    return solve_ground_state(0.5, build_grid(500, default_r_max(0.5), 2.0))


@pytest.fixture(scope="session")
def sol200():
    return solve_ground_state(0.5, build_grid(200, default_r_max(0.5), 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})")

import time

import numpy as np
import pytest

from cylstable.potentials import power
from cylstable.spectral import Grid1D, OperatorHandle, ground_state
from cylstable.stable_core import StableParams

# criterion -> list of (label, passed, detail); filled by test_acceptance
ACCEPTANCE = {}
RUNTIME_BUDGET = 900.0  # seconds for the whole session
_START = {}


def record(criterion, label, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))
    print(f"criterion {criterion} [{label}]: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_sessionstart(session):
    _START["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    wall = time.perf_counter() - _START["t"]
    record(10, "runtime", wall <= RUNTIME_BUDGET, f"session wall clock {wall:.0f} s <= {RUNTIME_BUDGET:.0f} s")
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        rows = ACCEPTANCE[criterion]
        ok = all(p for _, p, _ in rows)
        tr.write_line(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'}")
        for label, passed, detail in rows:
            tr.write_line(f"    {'PASS' if passed else 'FAIL'} {label}: {detail}")


@pytest.fixture(scope="session")
def small_gs():
    """Ground state for alpha = 1, q(r) = r^2 on a small box."""
    grid = Grid1D(6.0, 96)
    return ground_state(OperatorHandle(grid, StableParams(1.0), power(2)), k=6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

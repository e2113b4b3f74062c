import time

import numpy as np
import pytest

from oamsim.circuit import gate_basis
from oamsim.hilbert import LOGICAL_OAM


def shift_oracle(n: int, d: int = 4) -> np.ndarray:
    """X^n built entry by entry: |k> -> |k+n mod d>."""
    m = np.zeros((d, d), dtype=complex)
    for k in range(d):
        m[(k + n) % d, k] = 1.0
    return m


def logical_vec(coeffs_by_oam: dict) -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    for ell, c in coeffs_by_oam.items():
        v[LOGICAL_OAM.index(ell)] = c
    return v


@pytest.fixture(scope="session")
def basis2():
    return gate_basis()


@pytest.fixture(scope="session")
def basis3():
    return gate_basis(paths=3)


@pytest.fixture(scope="session")
def calibrated():
    from oamsim.photonsim import REPORTED_AVERAGES, calibrate_noise

    return calibrate_noise(REPORTED_AVERAGES)


# acceptance results, printed together at the end of the run
ACCEPTANCE_LINES: list[str] = []
SUITE_BUDGET_S = 60.0


def record_acceptance(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} AC{criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_sessionstart(session):
    session.config._oamsim_t0 = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - session.config._oamsim_t0
    ok = elapsed < SUITE_BUDGET_S
    if session.testscollected > 100:  # only meaningful for the full suite
        ACCEPTANCE_LINES.append(
            f"{'PASS' if ok else 'FAIL'} AC9 runtime: full suite {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)"
        )
        if not ok and exitstatus == 0:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

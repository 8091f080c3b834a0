import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_rotations(rng, n):
    return ScipyRotation.random(n, random_state=int(rng.integers(2**31))).as_matrix()


def random_rotation(rng):
    return random_rotations(rng, 1)[0]


def axis_rotation(axis, angle):
    """Independent axis rotation via scipy (oracle for the library's own builders)."""
    return ScipyRotation.from_euler(axis, angle).as_matrix()


# --------------------------------------------------------------------------
# acceptance reporting: one line per criterion at the end of the run

import time

SUITE_BUDGET_S = 120.0
ACCEPTANCE: dict = {}
_SESSION = {}


def record_acceptance(number, ok, detail):
    line = f"[AC-{number:02d}] {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_sessionstart(session):
    _SESSION["start"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _SESSION.get("start", time.perf_counter())
    _SESSION["elapsed"] = elapsed
    # the suite time budget only applies to a full run that includes the acceptance tests
    if 10 in ACCEPTANCE and elapsed > SUITE_BUDGET_S and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        tr.write_line(ACCEPTANCE[n])
    if 10 in ACCEPTANCE:
        elapsed = _SESSION.get("elapsed", 0.0)
        ok = elapsed <= SUITE_BUDGET_S
        tr.write_line(f"[AC-10] {'PASS' if ok else 'FAIL'}  suite wall time {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")

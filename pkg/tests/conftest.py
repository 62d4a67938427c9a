"""Shared fixtures and the acceptance-criteria summary hook.

Acceptance tests register one line per criterion through ``record_criterion``;
the terminal summary prints them all so a single ``pytest`` run ends with a
readable PASS/FAIL scoreboard.
"""

import warnings

import numpy as np
import pytest

import explaudit as ex

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
_CRITERIA = {}


def record_criterion(number, title, passed, detail):
    _CRITERIA[number] = (title, bool(passed), detail)
    status = "PASS" if passed else "FAIL"
    print(f"[criterion {number:02d}] {status} {title}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:02d} {status} {title}: {detail}"
        )


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def uniform1d():
    return ex.ProductDistribution.uniform_box([0.0], [1.0])


@pytest.fixture(scope="session")
def uniform2d():
    return ex.ProductDistribution.uniform_box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture(scope="session")
def l1_system():
    # gamma=0.3 trips the soft gamma>=1/48 warning by design; the l=1
    # closed form {0, 0, +-sqrt(10)} is the hand-checkable oracle case.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return ex.moment_system_for_l(1, 0.3, 0.05)


@pytest.fixture(scope="session")
def accept_probs():
    # the admissible triple used by the lower-bound acceptance runs
    return ex.moment_matched_probs(0.02, 0.02, 0.02)


@pytest.fixture(scope="session")
def small_partition(uniform1d):
    # 8 cells of mass 1/8, 8 sub-cells each: explicit, desk-scale
    return ex.build_partition(uniform1d, 1.0 / 32.0, 8)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)


@pytest.fixture(scope="session")
def criterion():
    # acceptance tests report their verdict line through this hook
    return record_criterion

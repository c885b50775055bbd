import numpy as np
import pytest

from hybridid.rbd import franka7_synthetic

_CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {status}  {detail}")


@pytest.fixture
def criterion(capsys):
    """Record (and print) the pass/fail line for one acceptance criterion."""

    def record(number, ok, detail="", status=None):
        status = status or ("PASS" if ok else "FAIL")
        _CRITERIA[number] = (status, detail)
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {status}  {detail}")
        return ok

    return record


@pytest.fixture(scope="session")
def franka():
    return franka7_synthetic()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

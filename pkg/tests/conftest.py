import numpy as np
import pytest

from bfcsim.spectral import RingParams
from bfcsim.state import BiphotonState


@pytest.fixture
def ring():
    return RingParams()


@pytest.fixture
def state(ring):
    return BiphotonState(ring)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, printed after the run
_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.split("::")[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.outcome != "passed":
        if _ACCEPTANCE.get(name) != "FAIL":
            _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        num, label = name[len("test_criterion_"):].split("_", 1)
        terminalreporter.write_line(f"criterion {int(num):2d} {_ACCEPTANCE[name]}  {label}")

import sys
from pathlib import Path

import pytest

from ctdispatch.model import load_system
from ctdispatch.orchestrator import run

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

sys.path.insert(0, str(Path(__file__).resolve().parent))


def fixture_path(name):
    return FIXTURES / f"{name}.json"


@pytest.fixture(scope="session")
def twounit():
    return load_system(fixture_path("twounit"))


@pytest.fixture(scope="session")
def constant():
    return load_system(fixture_path("constant"))


@pytest.fixture(scope="session")
def rts39():
    return load_system(fixture_path("rts39"))


@pytest.fixture(scope="session")
def twounit_solution(twounit):
    return run(twounit)


@pytest.fixture(scope="session")
def constant_solution(constant):
    return run(constant)


@pytest.fixture(scope="session")
def rts39_solution(rts39):
    return run(rts39)


CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    n = mark.args[0]
    CRITERIA[n] = CRITERIA.get(n, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if CRITERIA[n] else 'FAIL'}")

import sys
from pathlib import Path

import pytest

import tdplan

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = [
    "flight_fix3_fix4.json",
    "flight_gear.json",
    "micro_m1.json",
    "tornado.json",
    "dag_relay.json",
    "dag_fork.json",
    "dag_guard.json",
]
DAG_FIXTURES = ["dag_relay.json", "dag_fork.json", "dag_guard.json"]

_criteria: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        prev = _criteria.get(number)
        if prev is not None and prev[1] == "FAIL":
            status = "FAIL"
        duration = report.duration + (prev[2] if prev else 0.0)
        _criteria[number] = (title, status, duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, duration = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {status} ({duration:6.2f}s)  {title}")


@pytest.fixture(scope="session")
def m1_kb():
    return tdplan.load_fixture("micro_m1.json")


@pytest.fixture(scope="session")
def flight_kb():
    return tdplan.load_fixture("flight_fix3_fix4.json")


@pytest.fixture(scope="session")
def gear_kb():
    return tdplan.load_fixture("flight_gear.json")


@pytest.fixture(scope="session")
def tornado_kb():
    return tdplan.load_fixture("tornado.json")

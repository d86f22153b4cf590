import pytest

from oracles import M4

_acceptance_results = []


@pytest.fixture
def m4():
    return [row[:] for row in M4]


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        _acceptance_results.append((marker, report.outcome))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is not None and not any(k == "acceptance" for k, _ in item.user_properties):
        number, text = mark.args
        item.user_properties.append(("acceptance", (number, text)))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, text), outcome in sorted(_acceptance_results):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {number:2d}. {text}")

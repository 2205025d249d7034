"""Acceptance reporting: one PASS/FAIL line per ``criterion``-marked test group."""

import pytest

_RESULTS: dict[str, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion this test verifies")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_runtest_logreport(report):
    label = getattr(report, "criterion", None)
    # a failing setup or teardown counts against the criterion as well as the call itself
    if label is not None and (report.when == "call" or report.failed):
        _RESULTS.setdefault(label, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcomes in _RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if all(outcomes) else 'FAIL'}  {label}")

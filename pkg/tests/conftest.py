"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import pytest

_CRITERIA = {}  # number -> title
_OUTCOMES = {}  # number -> list of (nodeid, passed)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None and mark.args:
            number, title = mark.args
            _CRITERIA[number] = title
            item.user_properties.append(("criterion", number))


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        _OUTCOMES.setdefault(number, []).append((report.nodeid, report.passed and report.when == "call"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        runs = _OUTCOMES.get(number, [])
        if not runs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(ok for _, ok in runs) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {_CRITERIA[number]}")

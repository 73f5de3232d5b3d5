"""Collects the outcome of every test marked ``criterion`` and prints one
PASS/FAIL line per acceptance criterion at the end of the run."""
from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            entry = _RESULTS.setdefault(number, {"title": title, "tests": {}})
            entry["tests"][item.nodeid] = None


def pytest_runtest_logreport(report):
    for entry in _RESULTS.values():
        if report.nodeid in entry["tests"]:
            prev = entry["tests"][report.nodeid]
            if report.failed:
                entry["tests"][report.nodeid] = "failed"
            elif report.when == "call" and prev is None:
                entry["tests"][report.nodeid] = "skipped" if report.skipped else "passed"
            elif report.skipped and prev is None:
                entry["tests"][report.nodeid] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        outcomes = list(entry["tests"].values())
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif outcomes and all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "INCOMPLETE"
        terminalreporter.write_line(
            f"criterion {number}: {status:<10} {entry['title']} ({len(outcomes)} tests)")

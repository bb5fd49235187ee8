"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import re

_ACCEPTANCE_RESULTS = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    match = _PATTERN.search(report.nodeid)
    if not match or report.when != "call":
        return
    number, label = int(match.group(1)), match.group(2)
    _ACCEPTANCE_RESULTS[number] = (label, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_ACCEPTANCE_RESULTS):
        label, outcome = _ACCEPTANCE_RESULTS[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d} [{status}] {label.replace('_', ' ')}"
        )

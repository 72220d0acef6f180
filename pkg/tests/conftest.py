"""Collects acceptance checklist lines and prints them after the run."""

import re

ACCEPTANCE_LINES = []
FAILED_CRITERIA = set()


def record(criterion: int, detail: str) -> None:
    ACCEPTANCE_LINES.append((criterion, f"[acceptance] criterion {criterion}: "
                                        f"PASS - {detail}"))


def pytest_runtest_logreport(report):
    if report.failed:
        m = re.search(r"Criterion(\d+)", report.nodeid)
        if m:
            FAILED_CRITERIA.add(int(m.group(1)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for criterion, line in ACCEPTANCE_LINES:
        if criterion not in FAILED_CRITERIA:
            lines[criterion] = line
    for criterion in sorted(FAILED_CRITERIA):
        lines[criterion] = (f"[acceptance] criterion {criterion}: FAIL - "
                            "see test report above")
    if lines:
        terminalreporter.section("acceptance criteria")
        for criterion in sorted(lines):
            terminalreporter.write_line(lines[criterion])

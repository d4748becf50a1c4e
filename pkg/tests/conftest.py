"""Shared pytest plumbing.

The acceptance module registers one verdict line per criterion; they are
echoed after the run so the pass/fail table is visible even though pytest
captures stdout of passing tests.
"""

ACCEPTANCE_VERDICTS = []


def record_verdict(line):
    ACCEPTANCE_VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(line)

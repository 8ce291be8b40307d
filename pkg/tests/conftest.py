"""Shared pytest wiring: surface the acceptance criterion verdicts.

Passing tests have their stdout captured, so the per-criterion lines from
tests/test_acceptance.py are collected here and re-emitted in the terminal
summary where capture does not apply.
"""

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)

"""Shared fixtures; collects acceptance-check lines for the final summary."""
from __future__ import annotations

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Callable recording one pass/fail line, echoed after the test session."""

    def record(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)

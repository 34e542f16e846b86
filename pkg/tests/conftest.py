"""Shared test plumbing: the acceptance verdict ledger.

Acceptance tests append one line per criterion; the lines are replayed
in a dedicated section after the run so they are visible regardless of
output capture.
"""

verdict_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if verdict_lines:
        terminalreporter.section("acceptance verdicts")
        for line in verdict_lines:
            terminalreporter.write_line(line)

"""Shared test plumbing: the acceptance scoreboard.

Acceptance tests append one verdict line each; the summary hook prints
them after the run so the scoreboard survives output capture.
"""

VERDICT_LINES = []


def pytest_terminal_summary(terminalreporter):
    if VERDICT_LINES:
        terminalreporter.section("acceptance scoreboard")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)

"""Shared test helpers and the acceptance summary hook.

Acceptance tests register one verdict line each through record_acceptance;
the terminal summary prints them together so the outcome of every claimed
behavior is visible in a single block even when individual assertions fail.
"""

_ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(index: int, verdict: str, detail: str):
    """Store one acceptance verdict line, keyed by claim number."""
    _ACCEPTANCE_LINES[index] = "ACCEPTANCE %d: %s (%s)" % (index, verdict, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for index in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[index])

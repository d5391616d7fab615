"""Shared pytest hooks.

The acceptance suite records one verdict per criterion in ``VERDICTS``; the
terminal summary prints them so they show up without ``-s``.
"""

VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])

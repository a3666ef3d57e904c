from __future__ import annotations

import _verdicts


def pytest_terminal_summary(terminalreporter):
    if not _verdicts.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _verdicts.LINES:
        terminalreporter.write_line(line)

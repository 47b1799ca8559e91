"""Prints the acceptance result lines as one block at the end of the run."""
import acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(acceptance_log.lines):
        terminalreporter.write_line(line)

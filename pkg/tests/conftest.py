from _acceptance_log import RESULTS


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(RESULTS):
        terminalreporter.write_line(line)

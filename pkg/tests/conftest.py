RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(RESULTS, key=lambda k: (int(k.rstrip("b")), k))
    for key in order:
        terminalreporter.write_line(RESULTS[key].line())

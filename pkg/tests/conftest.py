from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# pass/fail lines reported by the acceptance suite, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

"""Shared pytest hooks: acceptance criteria get a one-line verdict each in the terminal summary."""

ACCEPTANCE = []


def record_acceptance(name, ok, detail):
    ACCEPTANCE.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")

"""Collects acceptance outcomes and prints one line per criterion after the run."""

ACCEPTANCE = {}


def record(criterion, title, passed, detail):
    ACCEPTANCE[criterion] = (title, passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(
            f"criterion {key} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")

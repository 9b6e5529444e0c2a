import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the acceptance summary."""

    def _report(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} [{number:>2}] {title}: {detail}"
        _LINES.append((number, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)

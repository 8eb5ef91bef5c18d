import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Print and keep one PASS/FAIL line per acceptance criterion."""

    def _record(n, ok, msg):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {msg}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

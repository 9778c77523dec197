import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line verdict shown in the terminal summary."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
        print(_LINES[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)

import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line PASS/FAIL summary that is echoed at the end of the run."""

    def record(criterion: str, ok: bool, detail: str) -> bool:
        _LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        print(_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)

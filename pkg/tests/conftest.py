import pytest

_LINES = []


@pytest.fixture
def criterion(capsys):
    """``criterion(no, ok, detail)`` records one pass/fail line, echoed at the end of the run."""
    def record(no, ok, detail=""):
        line = f"criterion {no:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)

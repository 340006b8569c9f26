import pytest

RESULTS: list[str] = []


@pytest.fixture
def report(capsys):
    """Record one acceptance line, print it unbuffered, then assert it."""
    def _report(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        RESULTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

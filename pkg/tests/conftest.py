import pytest

_LINES = []


class _Recorder:
    """Collects one pass/fail line per acceptance check."""

    def __call__(self, name: str, passed: bool, detail: str = ""):
        _LINES.append((name, bool(passed), detail))
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance checks")
    for name, ok, detail in _LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    """Record one acceptance line ``PASS|FAIL  #k  name  detail``."""
    def _report(k, name, passed, detail=""):
        ACCEPTANCE_LINES[k] = f"{'PASS' if passed else 'FAIL'}  #{k:<2d} {name}  {detail}"
        print(ACCEPTANCE_LINES[k])
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])

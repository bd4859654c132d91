"""Collects one PASS/FAIL line per acceptance criterion and prints them after the run."""
import pytest

_LINES = {}


@pytest.fixture(scope="session")
def acceptance_report():
    def record(tag, ok, detail):
        _LINES[tag] = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
        print(_LINES[tag])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for tag in sorted(_LINES):
            terminalreporter.write_line(_LINES[tag])

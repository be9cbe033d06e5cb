from pathlib import Path

import pytest

from sirtailor.text import parse_module

FIXTURES = Path(__file__).parent / "fixtures"

# (number, title, passed, seconds) rows filled in by test_acceptance
CRITERIA_RESULTS = []


def load_fixture(name):
    return parse_module((FIXTURES / name).read_text())


@pytest.fixture
def fixture_path():
    return lambda name: FIXTURES / name


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds in sorted(CRITERIA_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title} ({seconds:.2f}s)")

from pathlib import Path

import pytest

from gridseam.cases import illustrative, illustrative_feeder

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# acceptance lines collected by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE: list[str] = []


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIOS


@pytest.fixture
def case():
    return illustrative()


@pytest.fixture
def feeder():
    return illustrative_feeder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

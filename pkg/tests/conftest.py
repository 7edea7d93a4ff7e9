from dataclasses import replace
from datetime import date, datetime
from importlib import resources

import pytest

from crowdcast.ingest import CampaignRecord, State

SAMPLE = resources.files("crowdcast").joinpath("data/sample_1000.csv")

_BASE = CampaignRecord(
    id=1, name="Sample Project", main_category="Games", category="Tabletop Games",
    launched=datetime(2015, 1, 1, 10, 30), deadline=date(2015, 2, 1), state=State.SUCCESSFUL,
    backers=10, currency="USD", country="US", goal=100_00, usd_goal_real=100_00,
    pledged=150_00, usd_pledged=150_00, usd_pledged_real=150_00,
)


def make_record(**kw) -> CampaignRecord:
    """Record with sensible defaults; money keyword args are in cents."""
    if "state" in kw and isinstance(kw["state"], str):
        kw["state"] = State.parse(kw["state"])
    return replace(_BASE, **kw)


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture(scope="session")
def sample_path():
    return str(SAMPLE)


# acceptance criteria report lines, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

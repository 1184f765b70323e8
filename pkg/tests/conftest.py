"""Shared fixtures: the Boston 2016 aggregation example used in several suites."""

import numpy as np
import pytest

from budgetcore.model import Instance

# (project, size in dollars, approval votes) with an overall budget of $1,000,000.
BOSTON_ROWS = [
    ("Wicked Free Wifi 2.0", 119_000.0, 2054),
    ("Water Bottle Refill Stations at Parks", 260_000.0, 1794),
    ("Hubway Extensions", 101_600.0, 737),
    ("Bowdoin St. Roadway Resurfacing", 100_000.0, 611),
    ("Bike Lane Installation", 200_000.0, 771),
    ("Track at Walker Park", 240_000.0, 672),
    ("BCYF HP Dance Studio Renovation", 286_000.0, 759),
    ("BLA Gym Renovations", 475_000.0, 1044),
    ("Ringer Park Renovation", 280_000.0, 546),
    ("Green Renovation for BCYF Pino", 250_000.0, 452),
]
BOSTON_BUDGET = 1_000_000.0


def boston_instance() -> Instance:
    """Synthetic ballot matrix with exactly the published per-project vote counts.

    Voter i approves project j iff i < votes_j; with n equal to the largest
    count every voter approves at least the most popular project, and the
    column sums match the real election, which is all the welfare ranking and
    rounding depend on.
    """
    votes = np.array([v for _, _, v in BOSTON_ROWS])
    n = int(votes.max())
    u = (np.arange(n)[:, None] < votes[None, :]).astype(float)
    return Instance(
        utilities=u,
        budget=BOSTON_BUDGET,
        sizes=np.array([s for _, s, _ in BOSTON_ROWS]),
        item_names=tuple(name for name, _, _ in BOSTON_ROWS),
    )


@pytest.fixture
def boston() -> Instance:
    return boston_instance()

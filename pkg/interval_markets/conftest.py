"""
Shared fixtures for the interval market tests
"""

import pytest

from interval_markets.models.liquidity import LiquiditySchedule


@pytest.fixture
def state_path(tmp_path):
    return str(tmp_path / "market.json")


@pytest.fixture
def unit_schedule():
    return LiquiditySchedule.explicit([1.0, 1.0])


@pytest.fixture
def oracle_schedule():
    return LiquiditySchedule.explicit([0.4, 0.3, 0.2, 0.1])

"""
Tests for liquidity schedules
"""

import math

import pytest

from interval_markets.errors import BadArgs, LevelOutOfRange
from interval_markets.models.liquidity import (
    LOG2,
    UNFUNDED_FRACTION,
    LiquiditySchedule,
    cumulative_liquidity,
    loss_bound,
)


def test_explicit_cumulative_liquidity():
    schedule = LiquiditySchedule.explicit([0.5, 0.25, 0.125])
    assert schedule.max_level == 3
    assert schedule.liquidity(2) == 0.25
    assert schedule.cumulative_liquidity(0) == pytest.approx(0.875)
    assert schedule.cumulative_liquidity(2) == pytest.approx(0.125)
    assert schedule.cumulative_liquidity(3) == 0.0


def test_explicit_loss_bound():
    assert LiquiditySchedule.explicit([1.0, 1.0, 1.0]).loss_bound() == pytest.approx(4.158883, abs=1e-6)


def test_geometric_closed_forms():
    schedule = LiquiditySchedule.geometric(0.5, 0.5)
    assert schedule.liquidity(3) == pytest.approx(0.125)
    assert schedule.cumulative_liquidity(0) == pytest.approx(1.0)
    assert schedule.cumulative_liquidity(2) == pytest.approx(0.25)
    assert schedule.loss_bound() == pytest.approx(1.386294, abs=1e-6)


def test_split_spends_budget():
    schedule = LiquiditySchedule.split(8.0, {4: 0.5, 8: 0.5})
    assert schedule.max_level == 8
    assert schedule.liquidity(4) == pytest.approx(4.0 / (4 * LOG2))
    assert schedule.liquidity(1) == pytest.approx(UNFUNDED_FRACTION * 8.0)
    assert schedule.loss_bound() == pytest.approx(8.0, abs=1e-6)


@pytest.mark.parametrize("build", [
    lambda: LiquiditySchedule.explicit([]),
    lambda: LiquiditySchedule.explicit([1.0, 0.0]),
    lambda: LiquiditySchedule.explicit([math.inf]),
    lambda: LiquiditySchedule.geometric(1.0, 1.0),
    lambda: LiquiditySchedule.geometric(-1.0, 0.5),
    lambda: LiquiditySchedule.split(8.0, {4: 0.5, 8: 0.4}),
    lambda: LiquiditySchedule.split(0.0, {4: 1.0}),
])
def test_invalid_schedules(build):
    with pytest.raises(BadArgs):
        build()


def test_level_out_of_range():
    schedule = LiquiditySchedule.explicit([1.0, 1.0])
    with pytest.raises(LevelOutOfRange):
        schedule.liquidity(0)
    with pytest.raises(LevelOutOfRange):
        schedule.liquidity(3)
    with pytest.raises(LevelOutOfRange):
        schedule.cumulative_liquidity(3)


def test_single_level_emulates_lmsr():
    schedule = LiquiditySchedule.single_level(3, 2.0)
    assert schedule.liquidity(3) == 2.0
    assert schedule.loss_bound() == pytest.approx(3 * 2.0 * LOG2, rel=1e-6)


def test_descriptor_round_trip():
    for schedule in (LiquiditySchedule.explicit([0.5, 0.25]), LiquiditySchedule.geometric(1.0, 0.5)):
        assert LiquiditySchedule.from_descriptor(schedule.descriptor()) == schedule


def test_module_level_queries():
    schedule = LiquiditySchedule.explicit([0.5, 0.25, 0.125])
    assert cumulative_liquidity(schedule, 1) == pytest.approx(0.375)
    assert loss_bound(schedule) == pytest.approx((0.5 + 0.5 + 0.375) * LOG2)

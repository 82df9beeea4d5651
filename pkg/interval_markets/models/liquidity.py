"""
Per-level liquidity schedules for the multi-resolution market maker
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Tuple

from interval_markets.errors import BadArgs, LevelOutOfRange
from interval_markets.models.dyadic import MAX_PRECISION

LOG2 = math.log(2.0)

# Liquidity given to levels a budget split leaves unfunded, relative to the budget
UNFUNDED_FRACTION = 1e-9


class ScheduleKind(str, Enum):
    EXPLICIT = "explicit"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class LiquiditySchedule:
    """b_1..b_K given explicitly, or b_k = b1 * ratio^(k-1) for every k >= 1"""
    kind: ScheduleKind
    levels: Tuple[float, ...] = ()
    b1: float = 0.0
    ratio: float = 0.0
    _tails: Tuple[float, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == ScheduleKind.EXPLICIT:
            if not 1 <= len(self.levels) <= MAX_PRECISION:
                raise BadArgs("Explicit schedule needs between 1 and 62 levels", f"got {len(self.levels)}")
            for k, b in enumerate(self.levels, start=1):
                if not (math.isfinite(b) and b > 0.0):
                    raise BadArgs("Level liquidity must be positive and finite", f"b_{k}={b}")
            tails = tuple(math.fsum(self.levels[level:]) for level in range(len(self.levels) + 1))
            object.__setattr__(self, "_tails", tails)
        else:
            if not (math.isfinite(self.b1) and self.b1 > 0.0):
                raise BadArgs("Geometric schedule needs b1 > 0", f"b1={self.b1}")
            if not 0.0 < self.ratio < 1.0:
                raise BadArgs("Geometric schedule needs 0 < ratio < 1", f"ratio={self.ratio}")

    # ---------------- constructors -----------------
    @classmethod
    def explicit(cls, levels) -> "LiquiditySchedule":
        return cls(ScheduleKind.EXPLICIT, levels=tuple(float(b) for b in levels))

    @classmethod
    def geometric(cls, b1: float, ratio: float) -> "LiquiditySchedule":
        return cls(ScheduleKind.GEOMETRIC, b1=float(b1), ratio=float(ratio))

    @classmethod
    def split(cls, budget: float, fractions: Mapping[int, float], depth: Optional[int] = None) -> "LiquiditySchedule":
        """Give level k the liquidity whose loss bound is its budget share:
        b_k = f_k * B / (k log 2); unfunded levels get a vanishing amount"""
        if not (math.isfinite(budget) and budget > 0.0):
            raise BadArgs("Budget must be positive", f"budget={budget}")
        if not fractions:
            raise BadArgs("Budget split needs at least one funded level")
        if abs(math.fsum(fractions.values()) - 1.0) > 1e-9:
            raise BadArgs("Budget fractions must sum to 1", str(dict(fractions)))
        depth = depth or max(fractions)
        if min(fractions) < 1 or max(fractions) > depth:
            raise BadArgs("Funded levels must lie in 1..depth", str(sorted(fractions)))
        levels = []
        for k in range(1, depth + 1):
            share = fractions.get(k, 0.0)
            if share > 0.0:
                levels.append(share * budget / (k * LOG2))
            else:
                levels.append(UNFUNDED_FRACTION * budget)
        return cls.explicit(levels)

    @classmethod
    def single_level(cls, level: int, b: float) -> "LiquiditySchedule":
        """Emulates an LMSR at precision `level` with liquidity b"""
        return cls.explicit([b if k == level else UNFUNDED_FRACTION * b for k in range(1, level + 1)])

    # ---------------- queries -----------------
    @property
    def max_level(self) -> int:
        if self.kind == ScheduleKind.EXPLICIT:
            return len(self.levels)
        return MAX_PRECISION

    def liquidity(self, level: int) -> float:
        """b_k for 1 <= k <= max_level"""
        if not 1 <= level <= self.max_level:
            raise LevelOutOfRange("No liquidity parameter at this level", f"level={level}")
        if self.kind == ScheduleKind.EXPLICIT:
            return self.levels[level - 1]
        return self.b1 * self.ratio ** (level - 1)

    def cumulative_liquidity(self, level: int) -> float:
        """B_l = sum of b_k over k > l"""
        if level < 0:
            raise LevelOutOfRange("Level must be nonnegative", f"level={level}")
        if self.kind == ScheduleKind.EXPLICIT:
            if level > len(self.levels):
                raise LevelOutOfRange("Level beyond the schedule depth", f"level={level}, K={len(self.levels)}")
            return self._tails[level]
        return self.b1 * self.ratio ** level / (1.0 - self.ratio)

    def weighted_sum(self) -> float:
        """sum of k * b_k"""
        if self.kind == ScheduleKind.EXPLICIT:
            return math.fsum(k * b for k, b in enumerate(self.levels, start=1))
        return self.b1 / (1.0 - self.ratio) ** 2

    def loss_bound(self) -> float:
        return self.weighted_sum() * LOG2

    # ---------------- persistence -----------------
    def descriptor(self) -> Dict[str, Any]:
        if self.kind == ScheduleKind.EXPLICIT:
            return {"kind": self.kind.value, "levels": list(self.levels)}
        return {"kind": self.kind.value, "b1": self.b1, "ratio": self.ratio}

    @classmethod
    def from_descriptor(cls, data: Mapping[str, Any]) -> "LiquiditySchedule":
        kind = data.get("kind")
        if kind == ScheduleKind.EXPLICIT.value:
            return cls.explicit(data["levels"])
        if kind == ScheduleKind.GEOMETRIC.value:
            return cls.geometric(data["b1"], data["ratio"])
        raise BadArgs("Unknown schedule kind", str(kind))


def loss_bound(schedule: LiquiditySchedule) -> float:
    """(sum_k k b_k) log 2"""
    return schedule.loss_bound()


def cumulative_liquidity(schedule: LiquiditySchedule, level: int) -> float:
    return schedule.cumulative_liquidity(level)

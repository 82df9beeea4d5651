"""
Worst-case loss auditing shared by every engine
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from interval_markets.models.dyadic import Dyadic, Interval, payout


@dataclass
class LossAudit:
    """Money collected by the market maker and the positions it has sold"""
    initial_cost: float = 0.0
    collected: float = 0.0
    trades: List[Tuple[Interval, float]] = field(default_factory=list)

    def record(self, interval: Interval, shares: float, cost: float) -> None:
        self.collected += cost
        self.trades.append((interval, shares))

    def total_payout(self, outcome: Dyadic) -> float:
        """What the market maker owes if `outcome` is realized"""
        return math.fsum(shares * payout(interval, outcome) for interval, shares in self.trades)

    def worst_case_loss(self, precision: Optional[int] = None) -> float:
        """max of payout - collected over all outcomes in [0,1), or only over
        the 2^precision outcomes j/2^precision when `precision` is given.

        Payouts are constant between consecutive endpoints, so checking every
        left endpoint (and 0) is exact."""
        if precision is not None:
            return self._atom_loss(precision)
        if not self.trades:
            return -self.collected
        points = sorted({interval.lo for interval, _ in self.trades}
                        | {interval.hi for interval, _ in self.trades}
                        | {Dyadic(0, 0)})
        index = {point: i for i, point in enumerate(points)}
        steps = np.zeros(len(points) + 1)
        for interval, shares in self.trades:
            steps[index[interval.lo]] += shares
            steps[index[interval.hi]] -= shares
        # the last point is 1 (or the largest hi), which no outcome reaches
        payouts = np.cumsum(steps)[:len(points) - 1]
        if points[-1] < Dyadic(1, 0):
            payouts = np.append(payouts, 0.0)
        return float(payouts.max()) - self.collected

    def _atom_loss(self, precision: int) -> float:
        n = 1 << precision
        steps = np.zeros(n + 1)
        for interval, shares in self.trades:
            steps[_first_atom(interval.lo, precision)] += shares
            steps[_first_atom(interval.hi, precision)] -= shares
        return float(np.cumsum(steps)[:n].max()) - self.collected


def _first_atom(point: Dyadic, precision: int) -> int:
    """Smallest j with j / 2^precision >= point"""
    return -((-point.num << precision) >> point.prec)


def audit_loss(audit: LossAudit, engine, outcome: Dyadic) -> float:
    """Payout owed at `outcome` minus everything collected"""
    return engine.total_payout(outcome) - audit.collected

"""
Complete-market LMSR over 2^K atomic outcomes
Brute force; used as the reference the tree engines are checked against
"""

import math
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from interval_markets.config import settings
from interval_markets.errors import BadArgs, EndpointTooFine, NonFiniteShares
from interval_markets.models.dyadic import Dyadic, Interval
from interval_markets.services.loss_audit import LossAudit
from interval_markets.utils.numeric import NEG_INF, is_finite, lmsr_cost


class DenseLmsr:
    def __init__(self, b: float, K: int):
        if not (is_finite(b) and b > 0.0):
            raise BadArgs("Liquidity b must be positive and finite", f"b={b}")
        if not 1 <= K <= settings.dense_max_k:
            raise BadArgs(f"K exceeds oracle cap {settings.dense_max_k}", f"K={K}")
        self.b = float(b)
        self.K = K
        self.n_outcomes = 1 << K
        self.theta = np.zeros(self.n_outcomes)
        self.audit = LossAudit(initial_cost=self.total_cost())

    def _index_range(self, interval: Interval) -> Tuple[int, int]:
        for endpoint in (interval.lo, interval.hi):
            if endpoint.prec > self.K:
                raise EndpointTooFine("Endpoint finer than the market precision", f"{endpoint} with K={self.K}")
        return interval.lo.scaled(self.K), interval.hi.scaled(self.K)

    def log_normalizer(self) -> float:
        return float(logsumexp(self.theta / self.b))

    def total_cost(self) -> float:
        """C(theta) = b log sum_w e^{theta_w / b}"""
        return self.b * self.log_normalizer()

    def prices(self) -> np.ndarray:
        return np.exp(self.theta / self.b - self.log_normalizer())

    def log_price(self, interval: Interval) -> Tuple[float, float]:
        """(log p, log(1 - p)) for the bundle on `interval`"""
        start, stop = self._index_range(interval)
        weights = self.theta / self.b
        log_z = float(logsumexp(weights))
        outside = np.concatenate([weights[:start], weights[stop:]])
        log_rest = float(logsumexp(outside)) - log_z if outside.size else NEG_INF
        return float(logsumexp(weights[start:stop])) - log_z, log_rest

    def price(self, interval: Interval) -> float:
        log_price, log_rest = self.log_price(interval)
        if log_rest == NEG_INF:
            return 1.0
        return math.exp(log_price)

    def cost(self, interval: Interval, shares: float) -> float:
        if not is_finite(shares):
            raise NonFiniteShares("Shares must be finite", str(shares))
        return lmsr_cost(self.b, *self.log_price(interval), shares)

    def buy(self, interval: Interval, shares: float) -> float:
        charged = self.cost(interval, shares)
        start, stop = self._index_range(interval)
        self.theta[start:stop] += shares
        self.audit.record(interval, shares, charged)
        return charged

    def total_payout(self, outcome: Dyadic) -> float:
        return self.audit.total_payout(outcome)

    def loss_bound(self) -> float:
        return self.b * self.K * math.log(2.0)


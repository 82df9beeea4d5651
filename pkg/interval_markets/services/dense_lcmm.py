"""
Complete multi-resolution LCMM with an explicit constraint matrix

Every node of the depth-K dyadic tree carries theta; the arbitrage shares eta
are found by minimizing C(theta + A eta) numerically. Brute force; used as the
reference the LCMM tree is checked against.
"""

import math
from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from interval_markets.errors import BadArgs, EndpointTooFine, NonFiniteShares
from interval_markets.models.dyadic import Dyadic, Interval
from interval_markets.models.liquidity import LiquiditySchedule
from interval_markets.services.loss_audit import LossAudit
from interval_markets.utils.numeric import is_finite
from interval_markets.utils.safe_logger import market_logger

MAX_DEPTH = 8
GRADIENT_TOLERANCE = 1e-12


def node_index(level: int, position: int) -> int:
    """Heap order: level k occupies indices 2^k - 1 .. 2^(k+1) - 2"""
    return (1 << level) - 1 + position


def cover(alpha: Dyadic) -> List[Tuple[int, int]]:
    """(level, position) of the nodes whose disjoint union is [alpha, 1):
    the node starting at alpha plus every right sibling at a left turn"""
    nodes = []
    depth = alpha.prec
    target = alpha.scaled(depth) if depth else 0
    for level in range(1, depth + 1):
        position = target >> (depth - level)
        if position % 2 == 0:
            nodes.append((level, position + 1))
    nodes.append((depth, target))
    return nodes


class DenseLcmm:
    def __init__(self, schedule: LiquiditySchedule, K: int):
        if not 1 <= K <= MAX_DEPTH:
            raise BadArgs(f"K exceeds oracle cap {MAX_DEPTH}", f"K={K}")
        if K > schedule.max_level:
            raise BadArgs("Schedule is shallower than the oracle", f"K={K}")
        self.schedule = schedule
        self.K = K
        self.b = np.array([schedule.liquidity(k) for k in range(1, K + 1)])
        self.n_nodes = (1 << (K + 1)) - 1
        self.theta = np.zeros(self.n_nodes)
        self.A = self._constraint_matrix()
        self.eta = np.zeros(self.A.shape[1])
        self.audit = LossAudit(initial_cost=self.total_cost())

    def _constraint_matrix(self) -> np.ndarray:
        """One column per inner node y at levels 1..K-1: B_l at y and -b_k at
        each of its descendants at level k"""
        columns = []
        for level in range(1, self.K):
            for position in range(1 << level):
                column = np.zeros(self.n_nodes)
                column[node_index(level, position)] = self.schedule.cumulative_liquidity(level)
                for k in range(level + 1, self.K + 1):
                    span = 1 << (k - level)
                    start = node_index(k, position * span)
                    column[start:start + span] = -self.b[k - 1]
                columns.append(column)
        if not columns:
            return np.zeros((self.n_nodes, 0))
        return np.stack(columns, axis=1)

    def _levels(self, values: np.ndarray):
        for k in range(1, self.K + 1):
            yield k, values[node_index(k, 0):node_index(k + 1, 0)]

    # ---------------- cost function -----------------
    def _objective(self, theta: np.ndarray, eta: np.ndarray) -> float:
        shifted = theta + self.A @ eta
        total = shifted[0]
        for k, block in self._levels(shifted):
            total += self.b[k - 1] * logsumexp(block / self.b[k - 1])
        return float(total)

    def _node_prices(self, theta: np.ndarray, eta: np.ndarray) -> np.ndarray:
        shifted = theta + self.A @ eta
        prices = np.empty(self.n_nodes)
        prices[0] = 1.0
        for k, block in self._levels(shifted):
            prices[node_index(k, 0):node_index(k + 1, 0)] = softmax(block / self.b[k - 1])
        return prices

    def _hessian(self, prices: np.ndarray) -> np.ndarray:
        weights = np.zeros((self.n_nodes, self.n_nodes))
        for k, block in self._levels(prices):
            start, stop = node_index(k, 0), node_index(k + 1, 0)
            weights[start:stop, start:stop] = (np.diag(block) - np.outer(block, block)) / self.b[k - 1]
        return self.A.T @ weights @ self.A

    def optimal_eta(self, theta: np.ndarray, eta: np.ndarray, max_iterations: int = 200) -> np.ndarray:
        """Damped Newton on eta; the Hessian is singular, so steps are least-squares"""
        eta = eta.copy()
        if eta.size == 0:
            return eta
        value = self._objective(theta, eta)
        for _ in range(max_iterations):
            prices = self._node_prices(theta, eta)
            gradient = self.A.T @ prices
            if np.linalg.norm(gradient) <= GRADIENT_TOLERANCE:
                break
            step = -np.linalg.lstsq(self._hessian(prices), gradient, rcond=None)[0]
            slope = float(gradient @ step)
            scale = 1.0
            while scale > 1e-10:
                candidate = eta + scale * step
                candidate_value = self._objective(theta, candidate)
                if candidate_value <= value + 1e-4 * scale * slope:
                    break
                scale *= 0.5
            else:
                market_logger.debug("Oracle line search stalled", {"gradient": float(np.linalg.norm(gradient))})
                break
            eta, value = candidate, candidate_value
        return eta

    def total_cost(self, theta: np.ndarray = None) -> float:
        """C(theta) = min over eta of C~(theta + A eta)"""
        if theta is None:
            return self._objective(self.theta, self.eta)
        return self._objective(theta, self.optimal_eta(theta, self.eta))

    def node_prices(self) -> np.ndarray:
        return self._node_prices(self.theta, self.eta)

    def atom_prices(self) -> np.ndarray:
        prices = self.node_prices()
        return prices[node_index(self.K, 0):]

    # ---------------- trading -----------------
    def _check(self, interval: Interval) -> None:
        for endpoint in (interval.lo, interval.hi):
            if endpoint.prec > self.K:
                raise EndpointTooFine("Endpoint finer than the oracle depth", f"{endpoint} with K={self.K}")

    def _delta(self, interval: Interval, shares: float) -> np.ndarray:
        delta = np.zeros(self.n_nodes)
        for level, position in cover(interval.lo):
            delta[node_index(level, position)] += shares
        if not interval.is_one_sided:
            for level, position in cover(interval.hi):
                delta[node_index(level, position)] -= shares
        return delta

    def price(self, interval: Interval) -> float:
        self._check(interval)
        atoms = self.atom_prices()
        return float(atoms[interval.lo.scaled(self.K):interval.hi.scaled(self.K)].sum())

    def cost(self, interval: Interval, shares: float) -> float:
        if not is_finite(shares):
            raise NonFiniteShares("Shares must be finite", str(shares))
        self._check(interval)
        return self.total_cost(self.theta + self._delta(interval, shares)) - self.total_cost()

    def buy(self, interval: Interval, shares: float) -> float:
        if not is_finite(shares):
            raise NonFiniteShares("Shares must be finite", str(shares))
        self._check(interval)
        before = self.total_cost()
        self.theta = self.theta + self._delta(interval, shares)
        self.eta = self.optimal_eta(self.theta, self.eta)
        charged = self.total_cost() - before
        self.audit.record(interval, shares, charged)
        return charged

    def total_payout(self, outcome: Dyadic) -> float:
        return self.audit.total_payout(outcome)

    def loss_bound(self) -> float:
        return math.log(2.0) * float(np.dot(np.arange(1, self.K + 1), self.b))

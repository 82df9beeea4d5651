"""
Multi-resolution linearly constrained market maker over [0,1)

Level k of the complete dyadic tree runs its own LMSR with liquidity b_k over
the 2^k intervals of width 2^-k; level 0 is the single security [0,1). The
levels are tied by arbitrage shares eta: node z at level k trades at

    theta~_z = theta_z + B_k eta_z - b_k * (sum of eta over ancestors of z)

where B_k = sum of b_j over j > k. Every buy leaves the levels coherent (a
node's price equals the summed price of its children at the next level), so
the market price of a node is found by splitting the parent's price between
its two children with a softmax over (theta + B_k eta) / b_k.

Prices travel through descents and trades as (log mu, log(1 - mu)) pairs;
the complement is summed from the sibling and the mass outside the parent.

Only nodes on traded search paths are materialized; everything below a leaf
implicitly carries theta = eta = 0 and splits its price evenly.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from interval_markets.config import settings
from interval_markets.errors import (
    DegeneratePrice,
    IncoherentState,
    InvalidInterval,
    NonFiniteShares,
    PrecisionExceedsSchedule,
    StructureViolation,
)
from interval_markets.models.dyadic import ONE, ZERO, Dyadic, Interval, width
from interval_markets.models.liquidity import LiquiditySchedule, ScheduleKind
from interval_markets.services.loss_audit import LossAudit
from interval_markets.utils.numeric import NEG_INF, is_finite, log_pair, logaddexp, two_way_log_split
from interval_markets.utils.safe_logger import market_logger

LOG2 = math.log(2.0)

Key = Tuple[Dyadic, Dyadic]
# (log mu, log(1 - mu))
LogPrice = Tuple[float, float]
# (lo.num, lo.prec, hi.num, hi.prec, theta, eta)
NodeRecord = Tuple[int, int, int, int, float, float]


@dataclass(frozen=True)
class ArbitrageStep:
    """Outcome of removing the arbitrage between node y and its descendants"""
    t: float
    log_price: float             # new log price of y, equal to its descendants' price
    log_sibling_scale: float     # -log S, applied to every other node at y's level
    log_descendant_scale: float  # -t - log S_other, applied to y's descendants
    cost: float                  # b_l log S + B_l log S_other

    @property
    def price(self) -> float:
        return math.exp(self.log_price)

    @property
    def sibling_scale(self) -> float:
        return math.exp(self.log_sibling_scale)

    @property
    def descendant_scale(self) -> float:
        return math.exp(self.log_descendant_scale)


def remove_arbitrage_log(y: LogPrice, other: LogPrice, b: float, cum: float, cum_parent: float) -> ArbitrageStep:
    """remove_arbitrage on (log mu, log(1 - mu)) pairs; only mass that has
    vanished entirely from the float range is rejected"""
    for name, (log_mu, log_rest) in (("mu_y", y), ("mu_other", other)):
        if not (math.isfinite(log_mu) and math.isfinite(log_rest)):
            raise DegeneratePrice("Price mass vanished during arbitrage removal",
                                  f"log {name}={log_mu}, log(1 - {name})={log_rest}")
    (log_mu_y, log_rest_y), (log_mu_other, log_rest_other) = y, other
    t = (b / cum_parent) * (log_rest_y - log_mu_y + log_mu_other - log_rest_other)

    log_s = logaddexp(log_mu_y + t * cum / b, log_rest_y)
    log_s_other = logaddexp(log_mu_other - t, log_rest_other)
    return ArbitrageStep(
        t=t,
        log_price=log_mu_y + t * cum / b - log_s,
        log_sibling_scale=-log_s,
        log_descendant_scale=-t - log_s_other,
        cost=b * log_s + cum * log_s_other,
    )


def remove_arbitrage(mu_y: float, mu_other: float, b: float, cum: float, cum_parent: float,
                     epsilon: Optional[float] = None) -> ArbitrageStep:
    """Closed-form eta_y change making y's price at its own level equal to the
    price of its descendants at the finer levels.

    b = b_l, cum = B_l, cum_parent = B_{l-1} for y at level l >= 1. Plain
    fractions within epsilon of 0 or 1 are rejected."""
    eps = settings.degenerate_epsilon if epsilon is None else epsilon
    for name, mu in (("mu_y", mu_y), ("mu_other", mu_other)):
        if not eps < mu < 1.0 - eps:
            raise DegeneratePrice("Price mass vanished during arbitrage removal", f"{name}={mu}")
    if mu_y == mu_other:
        log_mu = math.log(mu_y)
        return ArbitrageStep(0.0, log_mu, 0.0, 0.0, 0.0)
    return remove_arbitrage_log(log_pair(mu_y), log_pair(mu_other), b, cum, cum_parent)


class LcmmNode:
    __slots__ = ("lo", "hi", "level", "theta", "eta", "left", "right")

    def __init__(self, lo: Dyadic, hi: Dyadic, level: int, theta: float = 0.0, eta: float = 0.0):
        self.lo = lo
        self.hi = hi
        self.level = level
        self.theta = theta
        self.eta = eta
        self.left: Optional["LcmmNode"] = None
        self.right: Optional["LcmmNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def key(self) -> Key:
        return (self.lo, self.hi)

    def __repr__(self) -> str:
        return f"LcmmNode([{self.lo}, {self.hi}), level={self.level}, theta={self.theta}, eta={self.eta})"


def _children(key: Key) -> Tuple[Key, Key]:
    lo, hi = key
    mid = lo.midpoint(hi)
    return (lo, mid), (mid, hi)


class LcmmTree:
    def __init__(self, schedule: LiquiditySchedule):
        self.schedule = schedule
        self.root = LcmmNode(ZERO, ONE, 0)
        self._nodes: Dict[Key, LcmmNode] = {self.root.key: self.root}
        self.visit_counter = 0
        self.audit = LossAudit()

    # ---------------- node access -----------------
    @property
    def node_count(self) -> int:
        return len(self._nodes)

    def node(self, lo: Dyadic, hi: Dyadic) -> Optional[LcmmNode]:
        return self._nodes.get((lo, hi))

    def _values(self, key: Key, overlay: Optional[Dict[Key, List[float]]] = None) -> Tuple[float, float]:
        if overlay is not None and key in overlay:
            theta, eta = overlay[key]
            return theta, eta
        node = self._nodes.get(key)
        if node is None:
            return 0.0, 0.0
        return node.theta, node.eta

    def _has_finer_levels(self, level: int) -> bool:
        return self.schedule.kind == ScheduleKind.GEOMETRIC or level < self.schedule.max_level

    def _child_log_shares(self, level: int, left: Sequence[float], right: Sequence[float]) -> Tuple[float, float]:
        """Log shares of the parent price going to the two children at `level`"""
        b = self.schedule.liquidity(level)
        cum = self.schedule.cumulative_liquidity(level)
        return two_way_log_split((left[0] + cum * left[1]) / b, (right[0] + cum * right[1]) / b)

    # ---------------- pricing -----------------
    def _log_split(self, node: LcmmNode, lo: Dyadic, hi: Dyadic, log_mu: float) -> Tuple[float, float, int]:
        """Log masses of the parts of `node` (price e^log_mu) inside and
        outside [lo, hi), and the number of search-path nodes visited; read-only"""
        if hi <= node.lo or node.hi <= lo:
            return NEG_INF, log_mu, 0
        if lo <= node.lo and node.hi <= hi:
            return log_mu, NEG_INF, 0
        if node.is_leaf:
            inside_lo, inside_hi = max(lo, node.lo), min(hi, node.hi)
            outside = 0.0
            if node.lo < inside_lo:
                outside += width(node.lo, inside_lo)
            if inside_hi < node.hi:
                outside += width(inside_hi, node.hi)
            log_width = math.log(width(node.lo, node.hi))
            return (log_mu + math.log(width(inside_lo, inside_hi)) - log_width,
                    log_mu + math.log(outside) - log_width, 1)
        log_left, log_right = self._child_log_shares(node.level + 1, (node.left.theta, node.left.eta),
                                                     (node.right.theta, node.right.eta))
        in_left, out_left, visits_left = self._log_split(node.left, lo, hi, log_mu + log_left)
        in_right, out_right, visits_right = self._log_split(node.right, lo, hi, log_mu + log_right)
        return logaddexp(in_left, in_right), logaddexp(out_left, out_right), visits_left + visits_right + 1

    def log_price(self, interval: Interval) -> LogPrice:
        """(log p, log(1 - p)) for the bundle on `interval`"""
        if not isinstance(interval, Interval):
            raise InvalidInterval("Expected an Interval", repr(interval))
        inside, outside, visits = self._log_split(self.root, interval.lo, interval.hi, 0.0)
        self.visit_counter = max(visits, 1)
        return inside, outside

    def price(self, interval: Interval) -> float:
        """Price from a descent along the two search paths of the endpoints.

        The descent assumes coherent levels and does not re-verify them;
        check_coherence compares the actual per-level prices and is run by
        the audit and show commands."""
        log_price, log_rest = self.log_price(interval)
        if log_rest == NEG_INF:
            return 1.0
        return min(math.exp(log_price), 1.0)

    def tail_price(self, alpha: Dyadic) -> float:
        if alpha == ONE:
            self.visit_counter = 0
            return 0.0
        return self.price(Interval(alpha, ONE))

    # ---------------- trading -----------------
    def _remove_arbitrage(self, level: int, key: Key, y: LogPrice, other: LogPrice,
                          overlay: Dict[Key, List[float]]) -> ArbitrageStep:
        step = remove_arbitrage_log(
            y, other,
            self.schedule.liquidity(level),
            self.schedule.cumulative_liquidity(level),
            self.schedule.cumulative_liquidity(level - 1),
        )
        overlay[key][1] += step.t
        return step

    def _add_shares(self, level: int, key: Key, shares: float, log_mu: float, log_partner: float,
                    log_outside: float, overlay: Dict[Key, List[float]]) -> Tuple[float, float, float, float]:
        """Sell `shares` of node `key` in the level LMSR and re-tie it to the
        finer levels. `log_partner` is the sibling's log price and `log_outside`
        the log mass of the level outside their parent. Returns the cost and
        the three log masses afterwards.

        Adding s at level l and then removing the arbitrage against the
        untouched finer levels composes to eta += -s / B_{l-1}: the coherent
        price of the node moves as in an LMSR with liquidity B_{l-1}, for a
        cost of B_{l-1} log(1 - mu + mu e^{s / B_{l-1}})."""
        log_rest = logaddexp(log_partner, log_outside)
        if not (math.isfinite(log_mu) and math.isfinite(log_rest)):
            raise DegeneratePrice("Price mass vanished before a trade",
                                  f"log mu={log_mu}, log(1 - mu)={log_rest} at level {level}")
        liquidity = self.schedule.cumulative_liquidity(level - 1)
        overlay[key][0] += shares
        if self._has_finer_levels(level):
            overlay[key][1] -= shares / liquidity

        log_s = logaddexp(log_mu + shares / liquidity, log_rest)
        return (liquidity * log_s, log_mu + shares / liquidity - log_s,
                log_partner - log_s, log_outside - log_s)

    def _trade(self, alpha: Dyadic, shares: float, overlay: Dict[Key, List[float]]) -> Tuple[float, List[Key], int]:
        """One-sided trade on [alpha, 1) written into `overlay`.

        Returns the cost, the search path and the number of node visits."""
        depth = alpha.prec
        if depth > self.schedule.max_level:
            raise PrecisionExceedsSchedule("Endpoint finer than the schedule's deepest level",
                                           f"{alpha} with K={self.schedule.max_level}")
        root_key = self.root.key
        overlay.setdefault(root_key, list(self._values(root_key, overlay)))
        if depth == 0:
            # [0,1) is the level-0 security: a pure cash transfer
            overlay[root_key][0] += shares
            return shares, [root_key], 1

        # per level: the path node, its sibling, and the mass outside their parent
        path = [root_key]
        log_mu = [0.0]
        log_sib = [NEG_INF]
        log_out = [NEG_INF]
        key = root_key
        for level in range(1, depth + 1):
            left, right = _children(key)
            for child in (left, right):
                overlay.setdefault(child, list(self._values(child, overlay)))
            log_left, log_right = self._child_log_shares(level, overlay[left], overlay[right])
            if alpha < right[0]:
                key, log_on, log_off = left, log_left, log_right
            else:
                key, log_on, log_off = right, log_right, log_left
            log_out.append(logaddexp(log_sib[-1], log_out[-1]))
            log_sib.append(log_mu[-1] + log_off)
            log_mu.append(log_mu[-1] + log_on)
            path.append(key)
        visits = depth + 1

        cost, log_mu[depth], log_sib[depth], log_out[depth] = self._add_shares(
            depth, path[depth], shares, log_mu[depth], log_sib[depth], log_out[depth], overlay)
        for level in range(depth, 0, -1):
            key, parent = path[level], path[level - 1]
            if key[0] == parent[0]:
                sibling = (key[1], parent[1])
                added, log_sib[level], log_mu[level], log_out[level] = self._add_shares(
                    level, sibling, shares, log_sib[level], log_mu[level], log_out[level], overlay)
                cost += added
                visits += 1
            if level - 1 >= 1:
                step = self._remove_arbitrage(
                    level - 1, parent,
                    (log_mu[level - 1], logaddexp(log_sib[level - 1], log_out[level - 1])),
                    (logaddexp(log_mu[level], log_sib[level]), log_out[level]),
                    overlay,
                )
                cost += step.cost
                log_mu[level - 1] = step.log_price
                log_sib[level - 1] += step.log_sibling_scale
                log_out[level - 1] += step.log_sibling_scale
                visits += 1
        return cost, path, visits

    def _execute(self, interval: Interval, shares: float) -> Tuple[float, Dict[Key, List[float]], List[List[Key]], int]:
        overlay: Dict[Key, List[float]] = {}
        cost, path, visits = self._trade(interval.lo, shares, overlay)
        paths = [path]
        if not interval.is_one_sided:
            cost_hi, path_hi, visits_hi = self._trade(interval.hi, -shares, overlay)
            cost += cost_hi
            visits += visits_hi
            paths.append(path_hi)
        return cost, overlay, paths, visits

    def _check_trade(self, interval: Interval, shares: float) -> None:
        if not is_finite(shares):
            raise NonFiniteShares("Shares must be finite", str(shares))
        if not isinstance(interval, Interval):
            raise InvalidInterval("Expected an Interval", repr(interval))

    def cost(self, interval: Interval, shares: float) -> float:
        """What buy(interval, shares) would charge; the tree is not modified"""
        self._check_trade(interval, shares)
        if shares == 0.0:
            self.visit_counter = 0
            return 0.0
        cost, _, _, self.visit_counter = self._execute(interval, shares)
        return cost

    def buy(self, interval: Interval, shares: float) -> float:
        self._check_trade(interval, shares)
        if shares == 0.0:
            self.visit_counter = 0
            return 0.0
        cost, overlay, paths, self.visit_counter = self._execute(interval, shares)
        created = self._commit(overlay, paths)
        if created:
            market_logger.debug("Materialized LCMM nodes", {"created": created, "total": self.node_count})
        self.audit.record(interval, shares, cost)
        return cost

    def _commit(self, overlay: Dict[Key, List[float]], paths: Iterable[List[Key]]) -> int:
        created = 0
        for path in paths:
            for level, key in enumerate(path[:-1]):
                parent = self._nodes[key]
                if parent.is_leaf:
                    left, right = _children(key)
                    parent.left = LcmmNode(left[0], left[1], level + 1)
                    parent.right = LcmmNode(right[0], right[1], level + 1)
                    self._nodes[left] = parent.left
                    self._nodes[right] = parent.right
                    created += 2
        for key, (theta, eta) in overlay.items():
            node = self._nodes[key]
            node.theta = theta
            node.eta = eta
        return created


    # ---------------- settlement -----------------
    def total_payout(self, outcome: Dyadic) -> float:
        return self.audit.total_payout(outcome)

    def loss_bound(self) -> float:
        return self.schedule.loss_bound()

    # ---------------- coherence maintenance -----------------
    def iter_nodes(self) -> Iterable[LcmmNode]:
        """Pre-order traversal"""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def _ancestor_eta(self) -> Dict[Key, float]:
        """Sum of eta over the strict ancestors of every materialized node"""
        sums = {self.root.key: 0.0}
        for node in self.iter_nodes():
            if not node.is_leaf:
                below = sums[node.key] + node.eta
                sums[node.left.key] = below
                sums[node.right.key] = below
        return sums

    def _deepest_checked_level(self) -> int:
        deepest = max(node.level for node in self._nodes.values())
        return min(deepest + 1, self.schedule.max_level)

    def _level_log_weights(self, ancestors: Dict[Key, float], level: int) -> Tuple[Dict[Key, float], Dict[Key, float], float]:
        """Unnormalized log weights theta~/b_k at `level` for materialized nodes
        and for the blocks of virtual nodes below shallower leaves, plus the
        level's log normalizer"""
        b = self.schedule.liquidity(level)
        cum = self.schedule.cumulative_liquidity(level)
        nodes: Dict[Key, float] = {}
        blocks: Dict[Key, float] = {}
        for node in self._nodes.values():
            if node.level == level:
                nodes[node.key] = (node.theta + cum * node.eta) / b - ancestors[node.key]
            elif node.level < level and node.is_leaf:
                blocks[node.key] = (level - node.level) * LOG2 - ancestors[node.key] - node.eta
        weights = np.fromiter(list(nodes.values()) + list(blocks.values()), dtype=float)
        return nodes, blocks, float(logsumexp(weights))

    def level_prices(self) -> Dict[int, Tuple[Dict[Key, float], Dict[Key, float]]]:
        """Actual per-level LMSR prices, computed from the normalizer of each
        level rather than by descent. Maps level -> (node prices, block prices)
        where blocks are keyed by the shallower leaf they sit under."""
        ancestors = self._ancestor_eta()
        result = {}
        for level in range(1, self._deepest_checked_level() + 1):
            nodes, blocks, log_z = self._level_log_weights(ancestors, level)
            result[level] = ({k: math.exp(w - log_z) for k, w in nodes.items()},
                             {k: math.exp(w - log_z) for k, w in blocks.items()})
        return result

    def coherence_violation(self) -> float:
        """max over materialized nodes y of |P_l(y) - P_{l+1}(below y)|"""
        prices = self.level_prices()
        worst = 0.0
        for node in self._nodes.values():
            level = node.level
            if level == 0 or level + 1 not in prices:
                continue
            own = prices[level][0][node.key]
            finer_nodes, finer_blocks = prices[level + 1]
            if node.is_leaf:
                below = finer_blocks[node.key]
            else:
                below = finer_nodes[node.left.key] + finer_nodes[node.right.key]
            worst = max(worst, abs(own - below))
        return worst

    def check_coherence(self, tolerance: Optional[float] = None) -> float:
        """The coherence violation, or IncoherentState above `tolerance`"""
        tolerance = settings.coherence_tolerance if tolerance is None else tolerance
        violation = self.coherence_violation()
        if violation > tolerance:
            raise IncoherentState("Levels disagree on node prices", f"violation={violation:.3e}")
        return violation

    def _recohere_pass(self) -> None:
        """Deepest level first, move each node's eta so that its weight ratio
        to the next level matches the 1/2 of the untouched virtual nodes"""
        ancestors = self._ancestor_eta()
        top = min(self._deepest_checked_level(), self.schedule.max_level - 1)
        for level in range(top, 0, -1):
            b = self.schedule.liquidity(level)
            cum = self.schedule.cumulative_liquidity(level)
            cum_parent = self.schedule.cumulative_liquidity(level - 1)
            finer_b = self.schedule.liquidity(level + 1)
            finer_cum = self.schedule.cumulative_liquidity(level + 1)
            for node in [n for n in self._nodes.values() if n.level == level]:
                below_anc = ancestors[node.key] + node.eta
                own = (node.theta + cum * node.eta) / b - ancestors[node.key]
                if node.is_leaf:
                    below = LOG2 - below_anc
                else:
                    below = logaddexp(
                        (node.left.theta + finer_cum * node.left.eta) / finer_b - below_anc,
                        (node.right.theta + finer_cum * node.right.eta) / finer_b - below_anc,
                    )
                node.eta -= (b / cum_parent) * (own - below + LOG2)

    def recohere(self, tolerance: Optional[float] = None, max_passes: int = 5) -> float:
        """Re-derive eta so the levels agree again; returns the final violation"""
        tolerance = settings.coherence_tolerance if tolerance is None else tolerance
        violation = self.coherence_violation()
        passes = 0
        while violation > tolerance and passes < max_passes:
            self._recohere_pass()
            passes += 1
            violation = self.coherence_violation()
        market_logger.debug("Recoherence sweep finished", {"passes": passes, "violation": violation})
        if violation > tolerance:
            raise IncoherentState("Recoherence did not converge", f"violation={violation:.3e}")
        return violation

    # ---------------- persistence -----------------
    def to_records(self) -> List[NodeRecord]:
        return [(n.lo.num, n.lo.prec, n.hi.num, n.hi.prec, n.theta, n.eta) for n in self.iter_nodes()]

    @classmethod
    def from_records(cls, schedule: LiquiditySchedule, records: Sequence[NodeRecord]) -> "LcmmTree":
        """Rebuild from a pre-order node list; children must split at midpoints.
        A node has children exactly when the next record is its left child."""
        tree = cls(schedule)
        tree._nodes.clear()
        keys = [(Dyadic(r[0], r[1]), Dyadic(r[2], r[3])) for r in records]
        position = 0

        def build(expected: Key, level: int) -> LcmmNode:
            nonlocal position
            if position >= len(records):
                raise StructureViolation("Node list ended early")
            key = keys[position]
            if key != expected:
                raise StructureViolation("Node is not the midpoint child of its parent",
                                         f"[{key[0]}, {key[1]}) where [{expected[0]}, {expected[1]}) belongs")
            if level > schedule.max_level:
                raise StructureViolation("Node deeper than the schedule", f"[{key[0]}, {key[1]})")
            node = LcmmNode(key[0], key[1], level, float(records[position][4]), float(records[position][5]))
            tree._nodes[key] = node
            position += 1
            left, right = _children(key)
            if position < len(records) and keys[position] == left:
                node.left = build(left, level + 1)
                node.right = build(right, level + 1)
            return node

        tree.root = build((ZERO, ONE), 0)
        if position != len(records):
            raise StructureViolation("Trailing records after the root subtree")
        return tree


def price(tree: LcmmTree, interval: Interval) -> float:
    return tree.price(interval)


def cost(tree: LcmmTree, interval: Interval, shares: float) -> float:
    return tree.cost(interval, shares)


def buy(tree: LcmmTree, interval: Interval, shares: float) -> float:
    return tree.buy(interval, shares)

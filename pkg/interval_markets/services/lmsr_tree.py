"""
Log-time LMSR over [0,1)

An AVL-balanced binary search tree over the traded endpoints. Every node z
covers [lo, hi), records the bundle shares s_z sold on that interval and the
log partial normalization constant

    L_z = s_z / b + log(hi - lo)                 (leaf)
    L_z = s_z / b + logsumexp(L_left, L_right)   (inner node)

so the LMSR normalizer is N * exp(L_root) for any outcome resolution N.
Buys walk the search path of each endpoint; price and cost walk the same
two paths and sum the log masses of the nodes between them, so no price is
ever formed by subtracting two tail prices.
"""

import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

from interval_markets.config import settings
from interval_markets.errors import (
    BadArgs,
    EndpointTooFine,
    InvalidInterval,
    NonFiniteShares,
    StructureViolation,
)
from interval_markets.models.dyadic import ONE, ZERO, Dyadic, Interval, width
from interval_markets.services.loss_audit import LossAudit
from interval_markets.utils.numeric import NEG_INF, is_finite, lmsr_cost, logaddexp
from interval_markets.utils.safe_logger import market_logger

LOG2 = math.log(2.0)

# (lo.num, lo.prec, hi.num, hi.prec, shares, height)
NodeRecord = Tuple[int, int, int, int, float, int]


class LmsrNode:
    __slots__ = ("lo", "hi", "height", "shares", "log_partial", "left", "right")

    def __init__(self, lo: Dyadic, hi: Dyadic):
        self.lo = lo
        self.hi = hi
        self.height = 0
        self.shares = 0.0
        self.log_partial = math.log(width(lo, hi))
        self.left: Optional["LmsrNode"] = None
        self.right: Optional["LmsrNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def interval(self) -> Interval:
        return Interval(self.lo, self.hi)

    def __repr__(self) -> str:
        return f"LmsrNode([{self.lo}, {self.hi}), h={self.height}, s={self.shares})"


class LmsrTree:
    def __init__(self, b: float, precision: Optional[int] = None):
        if not (is_finite(b) and b > 0.0):
            raise BadArgs("Liquidity b must be positive and finite", f"b={b}")
        if precision is not None and not 1 <= precision <= 62:
            raise BadArgs("Precision must be between 1 and 62", f"precision={precision}")
        self.b = float(b)
        self.precision = precision
        self.root = LmsrNode(ZERO, ONE)
        self.n_vals = 2
        self.n_buys = 0
        self.max_traded_precision = 0
        self.visit_counter = 0
        self.audit = LossAudit()

    # ---------------- node maintenance -----------------
    def _add_shares(self, node: LmsrNode, shares: float) -> None:
        node.shares += shares
        node.log_partial += shares / self.b

    def _reset_leaf(self, node: LmsrNode) -> None:
        node.height = 0
        node.log_partial = node.shares / self.b + math.log(width(node.lo, node.hi))

    def _reset_inner(self, node: LmsrNode) -> None:
        node.height = 1 + max(node.left.height, node.right.height)
        node.log_partial = node.shares / self.b + logaddexp(node.left.log_partial, node.right.log_partial)

    def rotate_left(self, z: LmsrNode) -> LmsrNode:
        """Replace z's right child z23 by a new left child z12 covering z1 and z2.

        z23's shares move into its children first, so removing it leaves the
        implied market state unchanged; z itself stays the subtree root."""
        z1, z23 = z.left, z.right
        if z1 is None or z23 is None or z23.is_leaf:
            raise StructureViolation("Left rotation needs an inner right child", repr(z))
        z2, z3 = z23.left, z23.right
        self._add_shares(z2, z23.shares)
        self._add_shares(z3, z23.shares)

        z12 = LmsrNode(z1.lo, z2.hi)
        z12.left, z12.right = z1, z2
        self._reset_inner(z12)

        z.left, z.right = z12, z3
        self._reset_inner(z)
        return z

    def rotate_right(self, z: LmsrNode) -> LmsrNode:
        """Mirror image of rotate_left"""
        z12, z3 = z.left, z.right
        if z12 is None or z3 is None or z12.is_leaf:
            raise StructureViolation("Right rotation needs an inner left child", repr(z))
        z1, z2 = z12.left, z12.right
        self._add_shares(z1, z12.shares)
        self._add_shares(z2, z12.shares)

        z23 = LmsrNode(z2.lo, z3.hi)
        z23.left, z23.right = z2, z3
        self._reset_inner(z23)

        z.left, z.right = z1, z23
        self._reset_inner(z)
        return z

    def _rebalance(self, z: LmsrNode) -> int:
        """Restore height balance at z; returns the number of rotations"""
        diff = z.left.height - z.right.height
        if diff >= 2:
            rotations = 1
            if z.left.left.height < z.left.right.height:
                self.rotate_left(z.left)
                rotations += 1
            self.rotate_right(z)
            market_logger.debug("Rebalanced with right rotation", str(z.interval))
            return rotations
        if diff <= -2:
            rotations = 1
            if z.right.right.height < z.right.left.height:
                self.rotate_right(z.right)
                rotations += 1
            self.rotate_left(z)
            market_logger.debug("Rebalanced with left rotation", str(z.interval))
            return rotations
        self._reset_inner(z)
        return 0

    # ---------------- one-sided operations -----------------
    def _buy_tail(self, node: LmsrNode, alpha: Dyadic, shares: float) -> int:
        """Add `shares` to the cover of [alpha, 1) below `node`; returns visits"""
        if node.lo == alpha:
            self._add_shares(node, shares)
            return 1
        if node.is_leaf:
            node.left = LmsrNode(node.lo, alpha)
            node.right = LmsrNode(alpha, node.hi)
            self.n_vals += 1
            self._add_shares(node.right, shares)
            self._reset_inner(node)
            return 1
        if alpha < node.right.lo:
            self._add_shares(node.right, shares)
            visits = self._buy_tail(node.left, alpha, shares)
        else:
            visits = self._buy_tail(node.right, alpha, shares)
        return visits + 1 + self._rebalance(node)

    # ---------------- range queries -----------------
    def _log_split(self, node: LmsrNode, lo: Dyadic, hi: Dyadic, log_path: float) -> Tuple[float, float, int]:
        """Log masses of the parts of `node` inside and outside [lo, hi), and
        the number of search-path nodes visited. Only nodes with an endpoint
        strictly inside are descended into; the nodes hanging off the two
        search paths are read but not counted."""
        total = log_path + node.log_partial
        if hi <= node.lo or node.hi <= lo:
            return NEG_INF, total, 0
        if lo <= node.lo and node.hi <= hi:
            return total, NEG_INF, 0
        if node.is_leaf:
            inside_lo, inside_hi = max(lo, node.lo), min(hi, node.hi)
            outside = 0.0
            if node.lo < inside_lo:
                outside += width(node.lo, inside_lo)
            if inside_hi < node.hi:
                outside += width(inside_hi, node.hi)
            log_width = math.log(width(node.lo, node.hi))
            return (total + math.log(width(inside_lo, inside_hi)) - log_width,
                    total + math.log(outside) - log_width, 1)
        inner = log_path + node.shares / self.b
        in_left, out_left, visits_left = self._log_split(node.left, lo, hi, inner)
        in_right, out_right, visits_right = self._log_split(node.right, lo, hi, inner)
        return logaddexp(in_left, in_right), logaddexp(out_left, out_right), visits_left + visits_right + 1

    def log_price(self, interval: Interval) -> Tuple[float, float]:
        """(log p, log(1 - p)) for the bundle on `interval`"""
        self._check_interval(interval)
        log_root = self.root.log_partial
        inside, outside, visits = self._log_split(self.root, interval.lo, interval.hi, 0.0)
        self.visit_counter = max(visits, 1)
        return inside - log_root, outside - log_root

    # ---------------- public operations -----------------
    def _check_interval(self, interval: Interval) -> None:
        if not isinstance(interval, Interval):
            raise InvalidInterval("Expected an Interval", repr(interval))
        if self.precision is not None:
            for endpoint in (interval.lo, interval.hi):
                if endpoint.prec > self.precision:
                    raise EndpointTooFine("Endpoint finer than the market precision",
                                          f"{endpoint} with K={self.precision}")

    def price(self, interval: Interval) -> float:
        """p_I from the masses of the nodes covering [lo, hi)"""
        log_price, log_rest = self.log_price(interval)
        if log_rest == NEG_INF:
            return 1.0
        return min(math.exp(log_price), 1.0)

    def tail_price(self, alpha: Dyadic) -> float:
        if alpha == ONE:
            self.visit_counter = 0
            return 0.0
        return self.price(Interval(alpha, ONE))

    def cost(self, interval: Interval, shares: float) -> float:
        if not is_finite(shares):
            raise NonFiniteShares("Shares must be finite", str(shares))
        self._check_interval(interval)
        if shares == 0.0:
            return 0.0
        return lmsr_cost(self.b, *self.log_price(interval), shares)

    def cost_curve(self, interval: Interval) -> Callable[[float], float]:
        """s -> cost(interval, s) at the current state, pricing the interval once"""
        log_price, log_rest = self.log_price(interval)
        return lambda shares: lmsr_cost(self.b, log_price, log_rest, shares)

    def buy(self, interval: Interval, shares: float) -> float:
        """Buy `shares` of the bundle on `interval`; returns the amount charged.

        A zero-share buy is a no-op and does not split any leaf."""
        charged = self.cost(interval, shares)
        if shares == 0.0:
            self.visit_counter = 0
            return 0.0
        visits = self._buy_tail(self.root, interval.lo, shares)
        if not interval.is_one_sided:
            visits += self._buy_tail(self.root, interval.hi, -shares)
        self.visit_counter = visits

        self.audit.record(interval, shares, charged)
        self.n_buys += 1
        self.max_traded_precision = max(self.max_traded_precision, interval.lo.prec, interval.hi.prec)
        if self.n_buys % settings.recompute_interval == 0:
            self.recompute_all()
        return charged

    def total_payout(self, outcome: Dyadic) -> float:
        return self.audit.total_payout(outcome)

    def loss_bound(self, precision: Optional[int] = None) -> float:
        """b log N for outcomes resolved to `precision` bits"""
        k = precision or self.precision or max(self.max_traded_precision, 1)
        return self.b * k * LOG2

    # ---------------- maintenance and inspection -----------------
    def iter_nodes(self) -> Iterable[LmsrNode]:
        """Pre-order traversal"""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def recompute_all(self) -> None:
        """Re-derive every log_partial bottom-up from shares and widths"""
        def walk(node: LmsrNode) -> None:
            if node.is_leaf:
                self._reset_leaf(node)
                return
            walk(node.left)
            walk(node.right)
            self._reset_inner(node)

        walk(self.root)
        market_logger.debug("Recomputed partial normalization constants", {"buys": self.n_buys})

    def check_invariants(self, tolerance: float = 1e-9) -> None:
        """Full walk over the binary-search, height and normalization properties"""
        if self.root.lo != ZERO or self.root.hi != ONE:
            raise StructureViolation("Root must cover [0,1)", repr(self.root))

        def walk(node: LmsrNode) -> Tuple[int, float]:
            if node.is_leaf:
                if node.height != 0:
                    raise StructureViolation("Leaf height must be 0", repr(node))
                expected = node.shares / self.b + math.log(width(node.lo, node.hi))
                height = 0
            else:
                left, right = node.left, node.right
                if right is None:
                    raise StructureViolation("Inner node needs two children", repr(node))
                if not (node.lo == left.lo and left.hi == right.lo and right.hi == node.hi
                        and left.lo < left.hi and right.lo < right.hi):
                    raise StructureViolation("Binary-search property violated", repr(node))
                h_left, l_left = walk(left)
                h_right, l_right = walk(right)
                if abs(h_left - h_right) > 1:
                    raise StructureViolation("Height balance violated", repr(node))
                height = 1 + max(h_left, h_right)
                if node.height != height:
                    raise StructureViolation("Stale height", repr(node))
                expected = node.shares / self.b + logaddexp(l_left, l_right)
            if abs(node.log_partial - expected) > tolerance * max(1.0, abs(expected)):
                raise StructureViolation("Partial normalization constant out of date",
                                         f"{node!r}: {node.log_partial} vs {expected}")
            return height, node.log_partial

        walk(self.root)

    def leaf_prices(self) -> List[Tuple[Interval, float]]:
        """Price of every leaf interval, left to right"""
        log_root = self.root.log_partial
        result: List[Tuple[Interval, float]] = []

        def walk(node: LmsrNode, log_path: float) -> None:
            if node.is_leaf:
                result.append((node.interval, math.exp(log_path + node.log_partial - log_root)))
                return
            inner = log_path + node.shares / self.b
            walk(node.left, inner)
            walk(node.right, inner)

        walk(self.root, 0.0)
        return result

    def potential(self) -> float:
        """C(theta) - C(0), independent of the outcome resolution"""
        return self.b * self.root.log_partial

    def depth(self) -> int:
        return self.root.height

    # ---------------- persistence -----------------
    def to_records(self) -> List[NodeRecord]:
        return [(n.lo.num, n.lo.prec, n.hi.num, n.hi.prec, n.shares, n.height) for n in self.iter_nodes()]

    @classmethod
    def from_records(cls, b: float, records: Sequence[NodeRecord], precision: Optional[int] = None) -> "LmsrTree":
        """Rebuild from a pre-order node list; log_partial is re-derived"""
        tree = cls(b, precision)
        items = iter(records)

        def build() -> LmsrNode:
            lo_num, lo_prec, hi_num, hi_prec, shares, height = next(items)
            node = LmsrNode(Dyadic(lo_num, lo_prec), Dyadic(hi_num, hi_prec))
            node.shares = float(shares)
            if height > 0:
                node.left = build()
                node.right = build()
                tree._reset_inner(node)
            else:
                tree._reset_leaf(node)
            return node

        try:
            tree.root = build()
        except StopIteration:
            raise StructureViolation("Node list ended early")
        if next(items, None) is not None:
            raise StructureViolation("Trailing records after the root subtree")
        tree.n_vals = sum(1 for node in tree.iter_nodes() if node.is_leaf) + 1
        tree.check_invariants()
        return tree


def price(tree: LmsrTree, interval: Interval) -> float:
    return tree.price(interval)


def cost(tree: LmsrTree, interval: Interval, shares: float) -> float:
    return tree.cost(interval, shares)


def buy(tree: LmsrTree, interval: Interval, shares: float) -> float:
    return tree.buy(interval, shares)

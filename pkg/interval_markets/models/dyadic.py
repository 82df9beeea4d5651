"""
Exact dyadic coordinates and interval securities on [0,1)
"""

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering

from interval_markets.errors import InvalidInterval, ParseError

# Numerators fit an unsigned 64-bit integer with headroom
MAX_PRECISION = 62

_POWER_FORM = re.compile(r"^\s*(\d+)\s*/\s*2\s*\^\s*(\d+)\s*$")


@total_ordering
@dataclass(frozen=True)
class Dyadic:
    """num / 2^prec, stored in canonical form (num odd, or the value is 0 or 1)"""
    num: int
    prec: int

    def __post_init__(self):
        if not 0 <= self.prec <= MAX_PRECISION:
            raise ParseError("Dyadic precision out of range", f"prec={self.prec}")
        if not 0 <= self.num <= (1 << self.prec):
            raise ParseError("Dyadic value outside [0,1]", f"{self.num}/2^{self.prec}")
        num, prec = self.num, self.prec
        if num == 0:
            prec = 0
        else:
            while prec > 0 and num % 2 == 0:
                num >>= 1
                prec -= 1
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "prec", prec)

    def scaled(self, prec: int) -> int:
        """Numerator at a common precision `prec` >= self.prec"""
        return self.num << (prec - self.prec)

    def __lt__(self, other: "Dyadic") -> bool:
        if not isinstance(other, Dyadic):
            return NotImplemented
        p = max(self.prec, other.prec)
        return self.scaled(p) < other.scaled(p)

    def __float__(self) -> float:
        return math.ldexp(self.num, -self.prec)

    def __str__(self) -> str:
        return f"{self.num}/2^{self.prec}"

    def midpoint(self, other: "Dyadic") -> "Dyadic":
        p = max(self.prec, other.prec)
        return Dyadic(self.scaled(p) + other.scaled(p), p + 1)

    @classmethod
    def from_fraction(cls, value: Fraction) -> "Dyadic":
        den = value.denominator
        if den & (den - 1):
            raise ParseError("Value is not dyadic", str(value))
        return cls(value.numerator, den.bit_length() - 1)

    @classmethod
    def from_float_rounded(cls, x: float, prec: int) -> "Dyadic":
        """Nearest multiple of 2^-prec to x, clamped to [0,1]"""
        scale = 1 << prec
        n = min(max(int(round(x * scale)), 0), scale)
        return cls(n, prec)


ZERO = Dyadic(0, 0)
ONE = Dyadic(1, 0)


def width(lo: Dyadic, hi: Dyadic) -> float:
    p = max(lo.prec, hi.prec)
    return math.ldexp(hi.scaled(p) - lo.scaled(p), -p)


def parse_dyadic(text: str) -> Dyadic:
    """Accepts "a/2^k", "a/b" with b a power of two, or an exactly dyadic decimal"""
    match = _POWER_FORM.match(text)
    if match:
        num, prec = int(match.group(1)), int(match.group(2))
        if prec > MAX_PRECISION:
            raise ParseError("Dyadic precision exceeds 62 bits", text)
        return Dyadic(num, prec)
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ParseError("Cannot parse endpoint", text)
    if value.denominator.bit_length() - 1 > MAX_PRECISION:
        raise ParseError("Endpoint is not a dyadic rational of at most 62 bits", text)
    try:
        return Dyadic.from_fraction(value)
    except ParseError:
        raise ParseError("Endpoint is not a dyadic rational of at most 62 bits", text)


@dataclass(frozen=True)
class Interval:
    """Half-open [lo, hi) with 0 <= lo < hi <= 1"""
    lo: Dyadic
    hi: Dyadic

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInterval("Interval needs lo < hi", f"[{self.lo}, {self.hi})")

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi})"

    def contains(self, outcome: Dyadic) -> bool:
        return self.lo <= outcome < self.hi

    @property
    def is_one_sided(self) -> bool:
        return self.hi == ONE

    @classmethod
    def parse(cls, lo: str, hi: str) -> "Interval":
        return cls(parse_dyadic(lo), parse_dyadic(hi))


def payout(interval: Interval, outcome: Dyadic) -> int:
    """Payoff of one share of `interval` when `outcome` is realized"""
    return 1 if interval.contains(outcome) else 0

"""
Hypothesis strategies and small helpers shared by the test modules
"""

from hypothesis import strategies as st

from interval_markets.models.dyadic import Dyadic, Interval


@st.composite
def intervals(draw, precision: int = 4):
    """[lo, hi) with both endpoints on the 2^-precision grid"""
    n = 1 << precision
    lo = draw(st.integers(min_value=0, max_value=n - 1))
    hi = draw(st.integers(min_value=lo + 1, max_value=n))
    return Interval(Dyadic(lo, precision), Dyadic(hi, precision))


def trades(precision: int = 4, max_size: int = 12, max_shares: float = 3.0):
    """Lists of (interval, shares) with |shares| <= max_shares"""
    shares = st.floats(min_value=-max_shares, max_value=max_shares, allow_nan=False, allow_infinity=False)
    return st.lists(st.tuples(intervals(precision), shares), max_size=max_size)


def interval(lo: str, hi: str) -> Interval:
    return Interval.parse(lo, hi)

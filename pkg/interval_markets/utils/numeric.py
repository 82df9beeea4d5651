"""
Log-domain helpers shared by the engines

Prices are carried as the pair (log p, log(1 - p)); the complement is always
summed from the masses it consists of, never formed as 1 - p.
"""

import math
from typing import Tuple

import numpy as np

NEG_INF = float("-inf")


def logaddexp(a: float, b: float) -> float:
    return float(np.logaddexp(a, b))


def log1m(x: float) -> float:
    """log(1 - x), -inf at x >= 1"""
    return math.log1p(-x) if x < 1.0 else NEG_INF


def log_pair(price: float) -> Tuple[float, float]:
    """(log p, log(1 - p)) for a plain price"""
    return (math.log(price) if price > 0.0 else NEG_INF), log1m(price)


def lmsr_cost(b: float, log_price: float, log_rest: float, shares: float) -> float:
    """Cost of `shares` of a bundle with price p = e^log_price and 1 - p = e^log_rest:
    b * log(1 - p + p * e^{s/b})"""
    if shares == 0.0 or log_price == NEG_INF:
        return 0.0
    if log_rest == NEG_INF:
        return shares
    return b * logaddexp(log_rest, log_price + shares / b)



def two_way_log_split(x_left: float, x_right: float) -> Tuple[float, float]:
    """Log of the softmax of two exponents"""
    log_total = logaddexp(x_left, x_right)
    return x_left - log_total, x_right - log_total


def is_finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)

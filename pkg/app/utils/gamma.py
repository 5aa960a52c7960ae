"""Incomplete gamma functions of positive integer order.

For integer s the upper function is a finite exponential sum,
    Q(s, x) = e^{−x} Σ_{m<s} x^m / m!,
so no special-function library is needed. Below x = s + 1 the lower function is
taken from its power series instead, which keeps full relative accuracy for
tiny arguments where 1 − Q would cancel.
"""

import math

import numpy as np

_SERIES_TERMS = 80


def _upper_sum(s: int, x: np.ndarray) -> np.ndarray:
    term = np.ones_like(x)
    total = np.ones_like(x)
    for m in range(1, s):
        term = term * x / m
        total = total + term
    return np.exp(-x) * total


def _lower_series(s: int, x: np.ndarray) -> np.ndarray:
    # P(s, x) = e^{−x} x^s / s! · Σ_j x^j / ((s+1)···(s+j))
    term = np.ones_like(x)
    total = np.ones_like(x)
    for j in range(1, _SERIES_TERMS):
        term = term * x / (s + j)
        total = total + term
    return np.exp(-x) * x**s / math.factorial(s) * total


def regularized_gamma(s: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Return (P(s, x), Q(s, x)) for integer s >= 1 and x >= 0."""
    if s < 1 or int(s) != s:
        raise ValueError(f"Order must be a positive integer, got {s}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("Incomplete gamma argument must be nonnegative")
    small = x < s + 1
    with np.errstate(over="ignore", invalid="ignore"):
        p_series = _lower_series(s, np.minimum(x, s + 1.0))
        q_sum = _upper_sum(s, x)
    p = np.where(small, p_series, 1.0 - q_sum)
    q = np.where(small, 1.0 - p_series, q_sum)
    return p, q


def lower_gamma_window(s: int, a, b) -> np.ndarray:
    """γ(s; a, b) = ∫_a^b u^{s−1} e^{−u} du for 0 <= a <= b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pa, qa = regularized_gamma(s, a)
    pb, qb = regularized_gamma(s, b)
    diff = np.where(a < s + 1, pb - pa, qa - qb)
    return math.factorial(s - 1) * diff

"""Regularized incomplete gamma function and distribution tails.

Series expansion below ``x = a + 1``, Lentz continued fraction above it
(Numerical Recipes, ch. 6).  Both branches also return the log of the
result so callers can report tails far below double-precision range.
"""

from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _log_prefactor(a: float, x: float) -> float:
    return -x + a * math.log(x) - math.lgamma(a)


def _lower_series(a: float, x: float) -> float:
    # returns log P(a, x)
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return math.log(total) + _log_prefactor(a, x)
    raise ArithmeticError(f"series for P({a}, {x}) did not converge")


def _upper_fraction(a: float, x: float) -> float:
    # returns log Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.log(h) + _log_prefactor(a, x)
    raise ArithmeticError(f"continued fraction for Q({a}, {x}) did not converge")


def log_gammaincc(a: float, x: float) -> float:
    """Natural log of the regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        p = math.exp(_lower_series(a, x))
        return math.log1p(-p) if p < 1.0 else -math.inf
    return _upper_fraction(a, x)


def gammainc(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return math.exp(_lower_series(a, x))
    return -math.expm1(_upper_fraction(a, x))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    return math.exp(log_gammaincc(a, x))


def chi2_sf(statistic: float, df: int) -> float:
    """Upper tail of the chi-square distribution."""
    if statistic <= 0:
        return 1.0
    return gammaincc(df / 2.0, statistic / 2.0)


def chi2_log_sf(statistic: float, df: int) -> float:
    if statistic <= 0:
        return 0.0
    return log_gammaincc(df / 2.0, statistic / 2.0)


def norm_sf(z: float) -> float:
    """Upper tail of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))

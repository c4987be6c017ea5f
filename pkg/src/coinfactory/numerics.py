"""Certified rational/dyadic arithmetic helpers.

Everything here is exact or one-sided: square roots and exponentials are
returned as dyadic rationals that bound the true value from the stated side,
so downstream schedule inequalities stay provable in integer arithmetic.
Float interval helpers at the bottom are used only by the float-with-bound
evaluation mode and widen by one ulp per operation.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

DYADIC_BITS = 64


@lru_cache(maxsize=1 << 16)
def comb(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


def binom(n: int, k: int) -> int:
    """Binomial coefficient, cached only for small n.

    Above 2**14 the cache would pin megabit integers in memory, so large
    arguments go straight to math.comb.
    """
    if n <= 1 << 14:
        return comb(n, k)
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


def floor_frac_mul(fr: Fraction, m: int) -> int:
    """floor(fr * m) without building an intermediate Fraction."""
    return (fr.numerator * m) // fr.denominator


def ceil_frac_mul(fr: Fraction, m: int) -> int:
    return -((-fr.numerator * m) // fr.denominator)


def dyadic_sqrt_upper(x: Fraction, bits: int = DYADIC_BITS) -> Fraction:
    """Smallest multiple of 2**-bits whose square is >= x (x >= 0)."""
    if x < 0:
        raise ValueError("sqrt of negative")
    if x == 0:
        return Fraction(0)
    num, den = x.numerator, x.denominator
    # smallest integer t with t*t*den >= num << (2*bits)
    target = num << (2 * bits)
    s = math.isqrt(target // den)
    if s * s * den < target:
        s += 1
    return Fraction(s, 1 << bits)


def dyadic_sqrt_lower(x: Fraction, bits: int = DYADIC_BITS) -> Fraction:
    """Largest multiple of 2**-bits whose square is <= x (x >= 0)."""
    if x < 0:
        raise ValueError("sqrt of negative")
    num, den = x.numerator, x.denominator
    s = math.isqrt((num << (2 * bits)) // den)
    return Fraction(s, 1 << bits)


def exp_neg_upper(t: Fraction, bits: int = DYADIC_BITS) -> Fraction:
    """Dyadic upper bound on exp(-t) for t >= 0, clamped to (0, 1].

    Argument reduction t = u * 2**s with u <= 1/2, an exact Taylor lower
    bound for exp(u), a ceiling reciprocal, then s ceiling squarings. Every
    rounding step goes up, so the result always dominates exp(-t). Very
    large t underflows to 2**-bits, which is still a valid upper bound.
    """
    if t < 0:
        raise ValueError("negative argument")
    if t == 0:
        return Fraction(1)
    s = 0
    u = t
    while u > Fraction(1, 2):
        u /= 2
        s += 1
    # exact partial Taylor sum: strictly below exp(u) for u > 0
    term = Fraction(1)
    total = Fraction(1)
    for j in range(1, 41):
        term = term * u / j
        total += term
    work = bits + 80
    one = 1 << work
    # X >= 2**work * exp(-u), then square up s times
    x = -((-one * total.denominator) // total.numerator)
    for _ in range(s):
        x = -((-(x * x)) // one)
    shift = work - bits
    out = -((-x) // (1 << shift))
    out = max(out, 1)
    return min(Fraction(out, 1 << bits), Fraction(1))


def rational_sin(x: Fraction, bits: int = 128) -> Fraction:
    """Dyadic approximation of sin(x) within 2**-bits, for 0 <= x <= 1.

    Alternating Taylor series, truncated once the next term drops below
    2**-(bits+8); the partial sum is then floor-rounded to bits+4
    fractional digits. Total error stays under 2**-bits.
    """
    if not 0 <= x <= 1:
        raise ValueError("argument outside [0, 1]")
    cutoff = Fraction(1, 1 << (bits + 8))
    term = x
    total = Fraction(0)
    j = 1
    sign = 1
    while term > cutoff:
        total += sign * term
        term = term * x * x / ((j + 1) * (j + 2))
        j += 2
        sign = -sign
    scale = 1 << (bits + 4)
    return Fraction((total.numerator * scale) // total.denominator, scale)


# --- float intervals with outward widening -------------------------------

_INF = math.inf


def _down(v: float) -> float:
    return math.nextafter(v, -_INF)


def _up(v: float) -> float:
    return math.nextafter(v, _INF)


def iv_from_fraction(fr: Fraction) -> tuple[float, float]:
    f = float(fr)  # correctly rounded
    return _down(f), _up(f)


def iv_add(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    return _down(a[0] + b[0]), _up(a[1] + b[1])


def iv_mul(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    products = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return _down(min(products)), _up(max(products))


def iv_div(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    if b[0] <= 0 <= b[1]:
        raise ZeroDivisionError("interval divisor straddles zero")
    quotients = (a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1])
    return _down(min(quotients)), _up(max(quotients))

"""Concrete envelope schedule constructors.

Four families. The doubling family tracks a capped-linear target with two
hinge correction terms whose coefficients are deliberately twice their
minimal admissible values; the smooth family tracks any Lipschitz or
twice-differentiable target with a shrinking symmetric margin; the
monomial family is exact for p**j and needs no margin at all; and the
continuous family turns Bernstein approximants of an arbitrary continuous
target into nested envelopes by searching shift exponents that clear every
polynomial coefficient.

All schedule arithmetic is exact. Irrational quantities enter only through
one-sided dyadic surrogates, so every envelope inequality that matters can
be (and is) re-checked in integer arithmetic by validate_schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .engine import EnvelopeSchedule
from .errors import ExponentNotFound, InvalidParams, MarginViolated
from .numerics import (
    binom,
    ceil_frac_mul,
    comb,
    dyadic_sqrt_upper,
    exp_neg_upper,
    floor_frac_mul,
)


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


# --- doubling family ------------------------------------------------------


@dataclass
class DoublingParams:
    """Margin eps plus hinge coefficients C1, C2 and first active checkpoint.

    C1 and C2 must be at least twice their minimal admissible values,
    (2+sqrt(2))/eps and 72/(1-exp(-2 eps^2)); the defaults are exactly
    twice those floors, rounded outward through dyadic surrogates. n0 is
    the first power of two where the upper envelope fits below 1 for every
    k; it is searched when not supplied and cross-checked when it is.
    """

    eps: Fraction
    C1: Optional[Fraction] = None
    C2: Optional[Fraction] = None
    n0: Optional[int] = None
    _sqrt_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _exp_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.eps = Fraction(self.eps)
        if not 0 < self.eps < Fraction(1, 8):
            raise InvalidParams("eps must lie strictly between 0 and 1/8")
        two_eps_sq = 2 * self.eps * self.eps
        exp_up = exp_neg_upper(two_eps_sq)
        if exp_up >= 1:
            raise InvalidParams("eps too small: exp surrogate saturates at 1")
        if self.C1 is None:
            self.C1 = (4 + 2 * dyadic_sqrt_upper(Fraction(2))) / self.eps
        else:
            self.C1 = Fraction(self.C1)
            scaled = self.C1 * self.eps - 4
            if scaled < 0 or scaled * scaled < 8:
                raise InvalidParams("C1 below twice the admissible floor")
        if self.C2 is None:
            self.C2 = Fraction(144) / (1 - exp_up)
        else:
            self.C2 = Fraction(self.C2)
            if self.C2 * (1 - exp_up) < 144:
                raise InvalidParams("C2 below twice the admissible floor")
        searched = self._search_n0()
        if self.n0 is None:
            self.n0 = searched
        elif self.n0 != searched:
            raise InvalidParams(
                f"n0={self.n0} is not the first admissible checkpoint ({searched})"
            )

    def sqrt_surrogate(self, n: int) -> Fraction:
        """Dyadic upper bound on sqrt(2/n); monotone decreasing in n."""
        if n not in self._sqrt_cache:
            self._sqrt_cache[n] = dyadic_sqrt_upper(Fraction(2, n))
        return self._sqrt_cache[n]

    def exp_surrogate(self, n: int) -> Fraction:
        """Dyadic upper bound on exp(-2 eps^2 n) at power-of-two n.

        A running minimum along the checkpoint ladder enforces the
        monotonicity invariant that the raw per-point bounds do not
        guarantee; the minimum of valid upper bounds is still valid.
        """
        if not _is_pow2(n):
            raise InvalidParams("exp surrogate is defined on powers of two")
        if n not in self._exp_cache:
            best = None
            m = 1
            while m <= n:
                if m not in self._exp_cache:
                    raw = exp_neg_upper(2 * self.eps * self.eps * m)
                    cand = raw if best is None else min(best, raw)
                    self._exp_cache[m] = cand
                best = self._exp_cache[m]
                m <<= 1
        return self._exp_cache[n]

    def _search_n0(self) -> int:
        n = 1
        while True:
            _, beta = alpha_beta_doubling(self, n, n)
            if beta <= 1:
                return n
            if n > 1 << 40:
                raise InvalidParams("no admissible first checkpoint below 2**40")
            n <<= 1


def alpha_beta_doubling(params: DoublingParams, n: int, k: int) -> tuple[Fraction, Fraction]:
    """Exact rational envelope pair at one (n, k).

    alpha = min(2k/n, 1-2eps). beta adds two hinge corrections, each a
    coefficient times the positive part of k/n past a threshold, weighted
    by the sqrt and exp surrogates.
    """
    if not _is_pow2(n):
        raise ValueError("n must be a positive power of two")
    if not 0 <= k <= n:
        raise ValueError("k outside [0, n]")
    x = Fraction(k, n)
    eps = params.eps
    alpha = min(2 * x, 1 - 2 * eps)
    hinge1 = x - (Fraction(1, 2) - 3 * eps)
    hinge2 = x - Fraction(1, 9)
    beta = alpha
    if hinge1 > 0:
        beta += params.C1 * hinge1 * params.sqrt_surrogate(n)
    if hinge2 > 0:
        beta += params.C2 * hinge2 * params.exp_surrogate(n)
    return alpha, beta


def _doubling_counts(params: DoublingParams):
    def counts(n: int, k: int, b: Optional[int] = None) -> tuple[int, int]:
        if b is None:
            b = binom(n, k)
        alpha, beta = alpha_beta_doubling(params, n, k)
        return floor_frac_mul(alpha, b), ceil_frac_mul(beta, b)

    return counts


def doubling_schedule(params: DoublingParams) -> EnvelopeSchedule:
    """Power-of-two checkpoints, idle below n0, envelope counts above.

    Above n0 the upper envelope is at most 1 by the definition of n0, so
    counts always satisfy 0 <= count_a <= count_b <= binom.
    """
    return EnvelopeSchedule(
        "doubling",
        {"eps": params.eps, "C1": params.C1, "C2": params.C2, "n0": params.n0},
        lambda j: 1 << j,
        _doubling_counts(params),
        ab_fn=lambda n, k: alpha_beta_doubling(params, n, k),
        idle_below=params.n0,
        metadata_extra={
            "n0": params.n0,
            "constants": {"C1": str(params.C1), "C2": str(params.C2)},
        },
    )


def doubling_raw_schedule(params: DoublingParams) -> EnvelopeSchedule:
    """Doubling envelope formulas applied at every checkpoint, no idle phase.

    Below n0 the upper counts exceed binom(n, k), so this variant fails
    the bounds class by construction; it exists to let the two
    convolution-consistency inequalities be verified on their own at
    small n, where the real schedule would still be idle.
    """
    return EnvelopeSchedule(
        "doubling-raw",
        {"eps": params.eps, "C1": params.C1, "C2": params.C2, "n0": params.n0},
        lambda j: 1 << j,
        _doubling_counts(params),
        ab_fn=lambda n, k: alpha_beta_doubling(params, n, k),
        idle_below=0,
        metadata_extra={
            "n0": params.n0,
            "variant": "raw",
            "constants": {"C1": str(params.C1), "C2": str(params.C2)},
        },
    )


# --- smooth (Lipschitz / twice-differentiable) family ---------------------

MODE_LIPSCHITZ = "lipschitz"
MODE_C2 = "twice-differentiable"


@dataclass
class SmoothnessParams:
    """Target f with smoothness constant C and margin eps < f < 1-eps.

    delta(n) is the symmetric envelope half-width at checkpoint n:
    (1+sqrt(2))*C/sqrt(n) rounded up to dyadic in Lipschitz mode (computed
    as C*(sqrt(1/n)+sqrt(2/n)), an exact identity), or C/(2n) in
    twice-differentiable mode.
    """

    target: Callable[[Fraction], Fraction]
    mode: str
    C: Fraction
    eps: Fraction
    grid_denominator: int = 1024

    def __post_init__(self):
        if self.mode not in (MODE_LIPSCHITZ, MODE_C2):
            raise InvalidParams(f"unknown mode {self.mode!r}")
        self.C = Fraction(self.C)
        self.eps = Fraction(self.eps)
        if self.C <= 0:
            raise InvalidParams("C must be positive")
        if not 0 < self.eps < Fraction(1, 2):
            raise InvalidParams("eps must lie in (0, 1/2)")

    def delta(self, n: int) -> Fraction:
        if self.mode == MODE_LIPSCHITZ:
            return self.C * (
                dyadic_sqrt_upper(Fraction(1, n)) + dyadic_sqrt_upper(Fraction(2, n))
            )
        return self.C / (2 * n)


def smooth_schedule(params: SmoothnessParams) -> EnvelopeSchedule:
    g = params.grid_denominator
    for j in range(1, g):
        v = Fraction(params.target(Fraction(j, g)))
        if not params.eps < v < 1 - params.eps:
            raise InvalidParams(
                f"margin violated: f({j}/{g}) = {v} outside ({params.eps}, {1 - params.eps})"
            )
    first_active = 1
    while params.delta(first_active) >= params.eps:
        first_active <<= 1
        if first_active > 1 << 40:
            raise InvalidParams("delta never drops below eps")

    def ab(n: int, k: int) -> tuple[Fraction, Fraction]:
        fk = Fraction(params.target(Fraction(k, n)))
        d = params.delta(n)
        return max(Fraction(0), fk - d), min(Fraction(1), fk + d)

    def counts(n: int, k: int, b: Optional[int] = None) -> tuple[int, int]:
        if b is None:
            b = binom(n, k)
        lo, hi = ab(n, k)
        return max(0, floor_frac_mul(lo, b)), min(b, ceil_frac_mul(hi, b))

    return EnvelopeSchedule(
        f"smooth-{params.mode}",
        {"mode": params.mode, "C": params.C, "eps": params.eps},
        lambda j: 1 << j,
        counts,
        ab_fn=ab,
        idle_below=first_active,
        metadata_extra={
            "first_active": first_active,
            "constants": {
                "C": str(params.C),
                "delta_formula": (
                    "C*(dyadic_sqrt_upper(1/n)+dyadic_sqrt_upper(2/n))"
                    if params.mode == MODE_LIPSCHITZ
                    else "C/(2n)"
                ),
            },
        },
    )


# --- exact monomial family -------------------------------------------------


def monomial_schedule(j: int) -> EnvelopeSchedule:
    """Exact schedule for p**j: both envelopes equal falling-factorial ratios.

    count_a(n,k) = count_b(n,k) = binom(n-j, k-j), i.e. the number of
    length-n words with k ones whose first j tosses are all heads.
    """
    if j < 1:
        raise InvalidParams("exponent must be a positive integer")

    def counts(n: int, k: int, b: Optional[int] = None) -> tuple[int, int]:
        c = binom(n - j, k - j) if k >= j else 0
        return c, c

    def ab(n: int, k: int) -> tuple[Fraction, Fraction]:
        a = Fraction(math.perm(k, j), math.perm(n, j))
        return a, a

    return EnvelopeSchedule(
        "monomial",
        {"exponent": j},
        lambda t: j << t,
        counts,
        ab_fn=ab,
        metadata_extra={"first_active": j},
    )


def corrupt_monomial_fixture() -> EnvelopeSchedule:
    """Monomial p**2 schedule with one planted consistency defect.

    (2,1) is widened to (0,1) so some runs survive the first checkpoint,
    and count_a(4,2) is forced to 0 while the carried lower mass there is
    1; any decision touching (4,2) must report an invalid schedule, and
    validation must flag exactly that cell.
    """
    base = monomial_schedule(2)
    overrides = {(2, 1): (0, 1), (4, 2): (0, 1)}

    def counts(n: int, k: int, b: Optional[int] = None) -> tuple[int, int]:
        if (n, k) in overrides:
            return overrides[(n, k)]
        return base.counts(n, k, b)

    return EnvelopeSchedule(
        "corrupt-monomial",
        {"exponent": 2},
        base.checkpoint,
        counts,
        metadata_extra={"planted_defect": "count_a(4,2) below carried lower mass"},
    )


# --- continuous-target family ----------------------------------------------


@dataclass(frozen=True)
class HomogeneousPoly:
    """Homogeneous bivariate polynomial, coeffs[k] multiplying x^k y^(degree-k)."""

    degree: int
    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) != self.degree + 1:
            raise ValueError("coefficient vector length must be degree+1")

    def convolve_ones(self) -> "HomogeneousPoly":
        """Multiply by (x + y): adjacent coefficient sums."""
        c = self.coeffs
        out = [c[0]]
        for i in range(1, len(c)):
            out.append(c[i] + c[i - 1])
        out.append(c[-1])
        return HomogeneousPoly(self.degree + 1, tuple(out))

    def shifted(self, s: int) -> "HomogeneousPoly":
        cur = self
        for _ in range(s):
            cur = cur.convolve_ones()
        return cur

    def minus(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        if other.degree != self.degree:
            raise ValueError("degree mismatch")
        return HomogeneousPoly(
            self.degree, tuple(a - b for a, b in zip(self.coeffs, other.coeffs))
        )


def polya_exponent(q: HomogeneousPoly, max_n: int) -> int:
    """Smallest n <= max_n with all coefficients of (x+y)^n q nonnegative."""
    cur = q
    for n in range(max_n + 1):
        if all(c >= 0 for c in cur.coeffs):
            return n
        cur = cur.convolve_ones()
    raise ExponentNotFound(f"no shift exponent up to {max_n} clears the coefficients")


@dataclass
class ContinuousParams:
    """Continuous target with per-level precision exponents.

    levels[t] = i means level t uses approximation offset 3*2**-i and must
    certify Bernstein error < 2**-i on the grid. degrees, shifts,
    grid_errors and certificate_hash are filled in by continuous_schedule.
    min_degree keeps the count rounding slack (at most one per coefficient,
    summing to under (n+1)*max(p,1-p)**n) well below the offsets.
    """

    target: Callable[[Fraction], Fraction]
    eps: Fraction
    levels: tuple
    min_degree: int = 32
    max_degree: int = 1 << 13
    max_shift: int = 4096
    grid_denominator: int = 1024
    degrees: Optional[tuple] = None
    shifts: Optional[tuple] = None
    grid_errors: Optional[tuple] = None
    certificate_hash: Optional[str] = None

    def __post_init__(self):
        self.eps = Fraction(self.eps)
        self.levels = tuple(int(i) for i in self.levels)
        if not self.levels:
            raise InvalidParams("at least one level required")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise InvalidParams("levels must be strictly increasing")
        for i in self.levels:
            if Fraction(1, 1 << i) >= self.eps / 4:
                raise InvalidParams(f"level {i}: 2**-{i} must be below eps/4")


def _bernstein_value(cvals, m: int, x: Fraction) -> Fraction:
    """Sum of cvals[l] * binom(m,l) * x^l * (1-x)^(m-l), exactly."""
    y = 1 - x
    total = Fraction(0)
    xpow = Fraction(1)
    ypows = [Fraction(1)]
    for _ in range(m):
        ypows.append(ypows[-1] * y)
    for l in range(m + 1):
        total += cvals[l] * comb(m, l) * xpow * ypows[m - l]
        xpow *= x
    return total


def continuous_schedule(params: ContinuousParams) -> EnvelopeSchedule:
    """Envelope schedule for an arbitrary continuous target on a grid certificate.

    Per level: certify the Bernstein approximant of degree m within 2**-i
    on the grid, offset it down (up) by 3*2**-i for the lower (upper)
    family, then search one shift exponent per family making consecutive
    differences coefficient-nonnegative; the larger exponent is used for
    both families so checkpoints stay shared.
    """
    f = params.target
    eps = params.eps
    g = params.grid_denominator
    fgrid = {}
    for j in range(g + 1):
        x = Fraction(j, g)
        v = Fraction(f(x))
        if not eps <= v <= 1 - eps:
            raise MarginViolated(f"f({j}/{g}) = {v} outside [{eps}, {1 - eps}]")
        fgrid[x] = v

    degrees = []
    lows = []
    highs = []
    errors = []
    for t, i in enumerate(params.levels):
        tol = Fraction(1, 1 << i)
        m = params.min_degree if t == 0 else 2 * degrees[-1]
        while True:
            if m > params.max_degree:
                raise InvalidParams(
                    f"level {i}: no degree up to {params.max_degree} meets 2**-{i} on the grid"
                )
            samples = [Fraction(f(Fraction(l, m))) for l in range(m + 1)]
            worst = Fraction(0)
            for x, fx in fgrid.items():
                err = abs(_bernstein_value(samples, m, x) - fx)
                if err > worst:
                    worst = err
            if worst < tol:
                break
            m *= 2
        degrees.append(m)
        errors.append(worst)
        offset = 3 * tol
        lows.append(
            HomogeneousPoly(m, tuple((s - offset) * comb(m, l) for l, s in enumerate(samples)))
        )
        highs.append(
            HomogeneousPoly(m, tuple((s + offset) * comb(m, l) for l, s in enumerate(samples)))
        )

    shifts = []
    for t in range(len(degrees) - 1):
        dm = degrees[t + 1] - degrees[t]
        s_low = polya_exponent(lows[t + 1].minus(lows[t].shifted(dm)), params.max_shift)
        s_high = polya_exponent(highs[t].shifted(dm).minus(highs[t + 1]), params.max_shift)
        shifts.append(max(s_low, s_high))

    checkpoints = []
    acc = 0
    for t, m in enumerate(degrees):
        checkpoints.append(m + acc)
        if t < len(shifts):
            acc += shifts[t]

    count_rows = {}
    for t, n in enumerate(checkpoints):
        pad = n - degrees[t]
        lo = lows[t].shifted(pad).coeffs
        hi = highs[t].shifted(pad).coeffs
        binom_k = 1
        cas, cbs = [], []
        for k in range(n + 1):
            cas.append(max(0, math.floor(lo[k])))
            cbs.append(min(binom_k, math.ceil(hi[k])))
            binom_k = binom_k * (n - k) // (k + 1)
        count_rows[n] = (cas, cbs)

    params.degrees = tuple(degrees)
    params.shifts = tuple(shifts)
    params.grid_errors = tuple(errors)
    cert = {
        "grid_denominator": g,
        "levels": [
            {"i": i, "degree": m, "max_error": str(e)}
            for i, m, e in zip(params.levels, degrees, errors)
        ],
    }
    params.certificate_hash = hashlib.sha256(
        json.dumps(cert, sort_keys=True).encode("ascii")
    ).hexdigest()

    def checkpoint(t: int) -> Optional[int]:
        return checkpoints[t] if 0 <= t < len(checkpoints) else None

    def counts(n: int, k: int, b: Optional[int] = None) -> tuple[int, int]:
        cas, cbs = count_rows[n]
        return cas[k], cbs[k]

    return EnvelopeSchedule(
        "continuous",
        {"eps": eps, "levels": params.levels, "degrees": params.degrees, "shifts": params.shifts},
        checkpoint,
        counts,
        metadata_extra={
            "levels": list(params.levels),
            "degrees": list(params.degrees),
            "shifts": list(params.shifts),
            "grid_certificate": params.certificate_hash,
        },
    )

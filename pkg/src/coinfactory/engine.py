"""Envelope engine: implicit-ranking execution of envelope schedules.

A schedule supplies, for every checkpoint n and weight k, integer counts
(count_a, count_b) = (binom(n,k)*a, binom(n,k)*b). Words of a checkpoint
length are classified OutputOne / Continue / OutputZero by rank against
those counts, under one fixed total order of candidates: by prefix
one-count, then prefix rank among the surviving (Continue) words, then
suffix lexicographic rank. That order makes the rank of a word computable
incrementally in O(n) big-integer operations without materializing any
word sets, while reproducing exactly the sets whose sizes are the counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .coins import CoinSource
from .errors import InvalidSchedule, Undecided
from .numerics import (
    binom as _uncached_binom,
    comb,
    iv_add,
    iv_from_fraction,
    iv_mul,
)


class Decision(Enum):
    OutputOne = "one"
    OutputZero = "zero"
    Continue = "continue"


@dataclass(frozen=True)
class OutcomeRecord:
    bit: int
    tosses: int


class EnvelopeSchedule:
    """Checkpoint sequence plus lazily evaluated integer envelope counts.

    counts_fn(n, k, binom) must return exact integers (count_a, count_b);
    the binom argument is an optional precomputed binom(n, k) so row walks
    can thread incremental binomials instead of recomputing them. ab_fn,
    when given, returns the unrounded rational envelope pair (alpha, beta)
    with count_a = floor(alpha*binom), count_b = ceil(beta*binom); the
    float-with-bound evaluator relies on it to avoid huge integers.
    Checkpoints below idle_below are idle: counts (0, binom(n,k)).
    """

    def __init__(
        self,
        name: str,
        params: dict,
        checkpoint_fn: Callable[[int], Optional[int]],
        counts_fn,
        ab_fn=None,
        idle_below: int = 0,
        metadata_extra: Optional[dict] = None,
    ):
        self.name = name
        self.params = dict(params)
        self._checkpoint_fn = checkpoint_fn
        self._counts_fn = counts_fn
        self._ab_fn = ab_fn
        self.idle_below = idle_below
        self._metadata_extra = dict(metadata_extra or {})

    def checkpoint(self, j: int) -> Optional[int]:
        """n_j for 0-based index j, or None past the end of a finite schedule."""
        return self._checkpoint_fn(j)

    def checkpoints_upto(self, limit: int) -> list[int]:
        out = []
        j = 0
        while True:
            n = self.checkpoint(j)
            if n is None or n > limit:
                return out
            out.append(n)
            j += 1

    def is_checkpoint(self, n: int) -> bool:
        pts = self.checkpoints_upto(n)
        return bool(pts) and pts[-1] == n

    def is_idle(self, n: int) -> bool:
        return n < self.idle_below

    def counts(self, n: int, k: int, binom: Optional[int] = None) -> tuple[int, int]:
        if self.is_idle(n):
            b = comb(n, k) if binom is None else binom
            return 0, b
        return self._counts_fn(n, k, binom)

    def ab_values(self, n: int, k: int) -> Optional[tuple[Fraction, Fraction]]:
        if self.is_idle(n):
            return Fraction(0), Fraction(1)
        if self._ab_fn is None:
            return None
        return self._ab_fn(n, k)

    def metadata(self) -> dict:
        meta = {"type": self.name, "parameters": {}}
        for key, value in sorted(self.params.items()):
            meta["parameters"][key] = str(value)
        meta.update(self._metadata_extra)
        return meta


def word_lexrank(word: Sequence[int]) -> int:
    """0-based rank of word among equal-weight words, ascending lex (0 < 1).

    Combinatorial number system, one big multiply and divide per position.
    """
    n = len(word)
    k = 0
    for b in word:
        k += b
    rank = 0
    r = k
    c = comb(n - 1, r) if n > 0 else 1
    for pos, bit in enumerate(word):
        rem = n - pos - 1
        if bit:
            rank += c
            if rem > 0:
                c = c * r // rem
            r -= 1
        else:
            if rem > 0:
                c = c * (rem - r) // rem
    return rank


# cached per-(jump, k) tables are only built below this checkpoint size;
# larger jumps stream their convolution sums without keeping rows
_CACHE_LIMIT = 1 << 14
_SNAPSHOT_STRIDE = 16


class _LevelData:
    """Convolution sums for one checkpoint jump m -> n at target weight k."""

    __slots__ = ("m", "n", "d", "k", "ta", "total", "da", "db",
                 "_snapshots", "_memo", "_ctx", "_ilo", "_ihi")

    def __init__(self, ctx: "RankContext", m: int, n: int, k: int):
        self.m = m
        self.n = n
        self.d = n - m
        self.k = k
        self._ctx = ctx
        self._ilo = max(0, k - self.d)
        self._ihi = min(m, k)
        self._snapshots = {}
        self._memo = {}
        self._build()

    def _build(self):
        ctx, m, d, k = self._ctx, self.m, self.d, self.k
        schedule = ctx.schedule
        ilo, ihi = self._ilo, self._ihi
        if schedule.is_idle(m):
            # all prefixes survive with gap = binom(m, i); Vandermonde total
            self.ta = 0
            self.total = comb(self.n, k) if self.n <= _CACHE_LIMIT else _bigcomb(self.n, k)
        else:
            ta = 0
            cum = 0
            cval = _bigcomb(d, k - ilo)
            bval = _bigcomb(m, ilo)
            snap = self._snapshots
            for i in range(ilo, ihi + 1):
                if (i - ilo) % _SNAPSHOT_STRIDE == 0:
                    snap[i] = (cum, cval)
                ca, cb = ctx.counts(m, i, bval)
                ta += cval * ca
                cum += cval * (cb - ca)
                if i < ihi:
                    cval = cval * (k - i) // (d - k + i + 1)
                    bval = bval * (m - i) // (i + 1)
            self.ta = ta
            self.total = cum
        ca_n, cb_n = self._ctx.counts(self.n, k)
        self.da = ca_n - self.ta
        self.db = cb_n - self.ta
        if self.da < 0:
            raise InvalidSchedule(self.n, k, f"lower consistency: count_a below carried mass by {-self.da}")
        if self.db > self.total:
            raise InvalidSchedule(self.n, k, f"upper consistency: count_b exceeds carried mass by {self.db - self.total}")

    def prefix_weight(self, i: int) -> int:
        """Candidates of weight k whose surviving prefix has fewer than i ones."""
        if i <= self._ilo:
            return 0
        if i > self._ihi:
            i = self._ihi + 1
        if self._ctx.schedule.is_idle(self.m):
            return self._idle_prefix(i)
        if i in self._memo:
            return self._memo[i]
        base = ((i - self._ilo) // _SNAPSHOT_STRIDE) * _SNAPSHOT_STRIDE + self._ilo
        while base not in self._snapshots:
            base -= _SNAPSHOT_STRIDE
        cum, cval = self._snapshots[base]
        m, d, k = self.m, self.d, self.k
        bval = _bigcomb(m, base)
        for ip in range(base, i):
            ca, cb = self._ctx.counts(m, ip, bval)
            cum += cval * (cb - ca)
            if ip + 1 <= self._ihi:
                cval = cval * (k - ip) // (d - k + ip + 1)
                bval = bval * (m - ip) // (ip + 1)
        self._memo[i] = cum
        return cum

    def _idle_prefix(self, i: int) -> int:
        # sum_{i' < i} binom(m, i') binom(d, k - i'), streamed
        if i in self._memo:
            return self._memo[i]
        m, d, k = self.m, self.d, self.k
        ilo = self._ilo
        cum = 0
        cval = _bigcomb(d, k - ilo)
        bval = _bigcomb(m, ilo)
        for ip in range(ilo, i):
            cum += bval * cval
            if ip + 1 <= self._ihi:
                cval = cval * (k - ip) // (d - k + ip + 1)
                bval = bval * (m - ip) // (ip + 1)
        self._memo[i] = cum
        return cum


_bigcomb = _uncached_binom


class RankContext:
    """Immutable schedule plus memo caches shared across runs."""

    def __init__(self, schedule: EnvelopeSchedule):
        self.schedule = schedule
        self._counts_memo: dict = {}
        self._levels: dict = {}

    def counts(self, n: int, k: int, binom: Optional[int] = None) -> tuple[int, int]:
        key = (n, k)
        hit = self._counts_memo.get(key)
        if hit is None:
            hit = self.schedule.counts(n, k, binom)
            if n <= _CACHE_LIMIT:
                self._counts_memo[key] = hit
        return hit

    def level_data(self, j: int, m: int, n: int, k: int) -> _LevelData:
        if n <= _CACHE_LIMIT:
            key = (j, k)
            hit = self._levels.get(key)
            if hit is None:
                hit = _LevelData(self, m, n, k)
                self._levels[key] = hit
            return hit
        return _LevelData(self, m, n, k)

    def first_level(self, n1: int, k: int, rank: int) -> tuple[Decision, int]:
        ca, cb = self.counts(n1, k)
        b = comb(n1, k)
        if not 0 <= ca <= cb <= b:
            raise InvalidSchedule(n1, k, f"count bounds: 0 <= {ca} <= {cb} <= {b} fails")
        if rank < ca:
            return Decision.OutputOne, 0
        if rank < cb:
            return Decision.Continue, rank - ca
        return Decision.OutputZero, 0

    def jump_level(
        self, j: int, m: int, n: int, prefix_ones: int, k: int, rho: int, suffix: Sequence[int]
    ) -> tuple[Decision, int]:
        data = self.level_data(j, m, n, k)
        r = (
            data.prefix_weight(prefix_ones)
            + rho * _bigcomb(n - m, k - prefix_ones)
            + word_lexrank(suffix)
        )
        if r < data.da:
            return Decision.OutputOne, 0
        if r < data.db:
            return Decision.Continue, r - data.da
        return Decision.OutputZero, 0


def decide(ctx: RankContext, word: Sequence[int]) -> Decision:
    """Classify a word whose length is a checkpoint.

    A word extending an already-decided prefix inherits that decision.
    """
    word = list(word)
    schedule = ctx.schedule
    pos = 0
    ones = 0
    rho = 0
    j = 0
    while True:
        n = schedule.checkpoint(j)
        if n is None or n > len(word):
            raise ValueError(f"word length {len(word)} is not a checkpoint")
        chunk = word[pos:n]
        new_ones = ones + sum(chunk)
        if j == 0:
            decision, rho = ctx.first_level(n, new_ones, word_lexrank(chunk))
        else:
            decision, rho = ctx.jump_level(j, pos, n, ones, new_ones, rho, chunk)
        ones = new_ones
        pos = n
        if decision is not Decision.Continue or pos == len(word):
            return decision
        j += 1


def simulate(
    schedule: EnvelopeSchedule,
    source: CoinSource,
    ctx: Optional[RankContext] = None,
    max_tosses: Optional[int] = None,
) -> OutcomeRecord:
    """Draw to successive checkpoints until the schedule decides.

    Intermediate lengths never decide. Raises Undecided when max_tosses
    would be exceeded or a finite schedule runs out of checkpoints.
    """
    if ctx is None:
        ctx = RankContext(schedule)
    start = source.tosses_consumed
    pos = 0
    ones = 0
    rho = 0
    j = 0
    while True:
        n = schedule.checkpoint(j)
        if n is None:
            raise Undecided(source.tosses_consumed - start)
        if max_tosses is not None and n > max_tosses:
            raise Undecided(source.tosses_consumed - start)
        chunk = source.draw_bits(n - pos)
        new_ones = ones + sum(chunk)
        if j == 0:
            decision, rho = ctx.first_level(n, new_ones, word_lexrank(chunk))
        else:
            decision, rho = ctx.jump_level(j, pos, n, ones, new_ones, rho, chunk)
        ones = new_ones
        pos = n
        if decision is Decision.OutputOne:
            return OutcomeRecord(1, source.tosses_consumed - start)
        if decision is Decision.OutputZero:
            return OutcomeRecord(0, source.tosses_consumed - start)
        j += 1


@dataclass(frozen=True)
class EnvelopeValues:
    g: object
    h: object
    g_err: object
    h_err: object


def envelope_eval(
    schedule: EnvelopeSchedule, p: Fraction, n: int, mode: str = "exact"
) -> EnvelopeValues:
    """Evaluate the lower/upper envelope polynomials at bias p.

    exact mode returns Fractions with zero error. float-with-bound mode
    returns doubles with certified absolute error bounds, computed from the
    schedule's rational envelope values and an outward-rounded binomial
    weight recurrence; count rounding contributes at most
    sum_k p^k (1-p)^(n-k), which is folded into the bounds.
    """
    p = Fraction(p)
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    if not schedule.is_checkpoint(n):
        raise ValueError(f"{n} is not a checkpoint")
    if mode == "exact":
        return _eval_exact(schedule, p, n)
    if mode == "float-with-bound":
        return _eval_float(schedule, p, n)
    raise ValueError(f"unknown mode {mode!r}")


def _eval_exact(schedule: EnvelopeSchedule, p: Fraction, n: int) -> EnvelopeValues:
    d = p.denominator
    num = p.numerator
    conum = d - num
    # common denominator d**n: g = sum ca * num^k * conum^(n-k) / d^n
    gsum = 0
    hsum = 0
    pk = 1
    qk = conum ** n
    binom = 1
    for k in range(n + 1):
        ca, cb = schedule.counts(n, k, binom)
        w = pk * qk
        gsum += ca * w
        hsum += cb * w
        if k < n:
            pk *= num
            qk //= conum
            binom = binom * (n - k) // (k + 1)
    dn = d ** n
    return EnvelopeValues(Fraction(gsum, dn), Fraction(hsum, dn), Fraction(0), Fraction(0))


def _eval_float(schedule: EnvelopeSchedule, p: Fraction, n: int) -> EnvelopeValues:
    if schedule.ab_values(n, 0) is None:
        exact = _eval_exact(schedule, p, n)
        g = float(exact.g)
        h = float(exact.h)
        ulp = 1e-15
        return EnvelopeValues(g, h, ulp * max(1.0, abs(g)), ulp * max(1.0, abs(h)))
    q = 1 - p
    # anchored binomial pmf recurrence in outward-rounded double intervals
    k_star = min(n, int((n + 1) * p))
    w_star = Fraction(_bigcomb(n, k_star)) * p ** k_star * q ** (n - k_star)
    ratio = p / q
    glo = ghi = hlo = hhi = 0.0
    w_iv = iv_from_fraction(w_star)
    for k, wv in _pmf_walk(n, k_star, w_iv, ratio):
        ab = schedule.ab_values(n, k)
        alpha_iv = iv_from_fraction(ab[0])
        beta_iv = iv_from_fraction(ab[1])
        gterm = iv_mul(alpha_iv, wv)
        hterm = iv_mul(beta_iv, wv)
        glo, ghi = iv_add((glo, ghi), gterm)
        hlo, hhi = iv_add((hlo, hhi), hterm)
    slack = _rounding_slack(p, q, n)
    # count_a = floor(alpha * binom) lies in [alpha - 1/binom, alpha]
    glo -= slack
    hhi += slack
    g = 0.5 * (glo + ghi)
    h = 0.5 * (hlo + hhi)
    return EnvelopeValues(g, h, (ghi - glo) * 0.5 + slack, (hhi - hlo) * 0.5 + slack)


def _pmf_walk(n, k_star, w_star_iv, ratio):
    """Yield (k, weight interval) from the anchor outward, both directions."""
    up = iv_from_fraction(ratio)
    down = iv_from_fraction(1 / ratio)
    wv = w_star_iv
    k = k_star
    while True:
        yield k, wv
        if wv[1] == 0.0 or k == n:
            break
        step = iv_from_fraction(Fraction(n - k, k + 1))
        wv = iv_mul(iv_mul(wv, step), up)
        k += 1
    wv = w_star_iv
    k = k_star
    while k > 0:
        step = iv_from_fraction(Fraction(k, n - k + 1))
        wv = iv_mul(iv_mul(wv, step), down)
        k -= 1
        if wv[1] == 0.0:
            break
        yield k, wv


def _rounding_slack(p: Fraction, q: Fraction, n: int) -> float:
    # sum_k p^k q^(n-k) <= (n+1) max(p,q)^n, upper bounded in doubles
    base = iv_from_fraction(max(p, q))
    acc = (1.0, 1.0)
    e = n
    sq = base
    while e:
        if e & 1:
            acc = iv_mul(acc, sq)
        e >>= 1
        if e:
            sq = iv_mul(sq, sq)
    hi = acc[1] * (n + 1)
    if hi == 0.0:
        hi = 5e-324 * (n + 1)
    return math.nextafter(hi, math.inf)


@dataclass(frozen=True)
class Violation:
    kind: str  # bounds | lower-consistency | upper-consistency
    n: int
    k: int
    lhs: int
    rhs: int


@dataclass
class ValidationReport:
    max_checkpoint: int
    checked: list[int]
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def consistency_violations(self) -> list[Violation]:
        return [v for v in self.violations if v.kind != "bounds"]


def validate_schedule(
    schedule: EnvelopeSchedule,
    max_checkpoint: int,
    check_bounds: bool = True,
) -> ValidationReport:
    """Exact big-integer verification of bounds and consecutive consistency.

    Violations are report entries, never exceptions. check_bounds=False
    restricts the run to the two convolution inequalities, which is what
    raw (unclamped) envelope variants are validated against.
    """
    points = schedule.checkpoints_upto(max_checkpoint)
    violations: list[Violation] = []
    rows: dict[int, tuple[list[int], list[int]]] = {}

    def row(n: int) -> tuple[list[int], list[int]]:
        if n not in rows:
            cas, cbs = [], []
            binom = 1
            for k in range(n + 1):
                ca, cb = schedule.counts(n, k, binom)
                cas.append(ca)
                cbs.append(cb)
                binom = binom * (n - k) // (k + 1)
            rows[n] = (cas, cbs)
        return rows[n]

    for n in points:
        cas, cbs = row(n)
        if check_bounds:
            binom = 1
            for k in range(n + 1):
                if not 0 <= cas[k] <= cbs[k] <= binom:
                    violations.append(Violation("bounds", n, k, cas[k], cbs[k]))
                binom = binom * (n - k) // (k + 1)

    for m, n in zip(points, points[1:]):
        d = n - m
        cas_m, cbs_m = row(m)
        cas_n, cbs_n = row(n)
        for k in range(n + 1):
            ilo = max(0, k - d)
            ihi = min(m, k)
            ta = 0
            tb = 0
            cval = comb(d, k - ilo)
            for i in range(ilo, ihi + 1):
                ta += cval * cas_m[i]
                tb += cval * cbs_m[i]
                if i < ihi:
                    cval = cval * (k - i) // (d - k + i + 1)
            if cas_n[k] < ta:
                violations.append(Violation("lower-consistency", n, k, cas_n[k], ta))
            if cbs_n[k] > tb:
                violations.append(Violation("upper-consistency", n, k, cbs_n[k], tb))

    return ValidationReport(max_checkpoint, points, violations)


def dump_envelope_csv(schedule: EnvelopeSchedule, max_checkpoint: int, path) -> None:
    """CSV dump: comment line naming schedule and parameters, then n,k,count_a,count_b."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        params = json.dumps({k: str(v) for k, v in sorted(schedule.params.items())})
        fh.write(f"# schedule={schedule.name} params={params}\n")
        fh.write("n,k,count_a,count_b\n")
        for n in schedule.checkpoints_upto(max_checkpoint):
            binom = 1
            for k in range(n + 1):
                ca, cb = schedule.counts(n, k, binom)
                fh.write(f"{n},{k},{ca},{cb}\n")
                binom = binom * (n - k) // (k + 1)

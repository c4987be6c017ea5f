"""Coin sources: deterministic, replayable, countable Bernoulli(p) bit streams.

Two kinds exist. A generator source draws 64 uniform bits per toss and
compares them with the binary expansion of a rational bias, extending one
bit at a time on the (probability 2**-64) ambiguous boundary, so each
emitted bit is exactly Bernoulli(p) with no floating point involved. A tape
source replays a recorded bit sequence and never fabricates bits.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import SourceExhausted, UnsupportedForTape

# splitmix64 increment, the usual 64-bit golden-ratio constant; fixed here
# so forked streams are reproducible across platforms and versions.
FORK_MIX_CONSTANT = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    state = (state + FORK_MIX_CONSTANT) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, stream_index: int) -> int:
    """Derived seed for fork_independent: two splitmix64 rounds."""
    return _splitmix64(_splitmix64(seed & _MASK64) ^ (stream_index & _MASK64))


class CoinSource:
    """Abstract stream of p-coin bits with exact toss accounting."""

    kind = "abstract"
    tosses_consumed: int

    def next_bit(self) -> int:
        raise NotImplementedError

    def draw_bits(self, count: int) -> list[int]:
        return [self.next_bit() for _ in range(count)]

    def fork_independent(self, stream_index: int) -> "CoinSource":
        raise UnsupportedForTape(f"{self.kind} sources cannot fork")


class TapeSource(CoinSource):
    kind = "recorded-tape"

    def __init__(self, bits):
        self.bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("tape bits must be 0 or 1")
        self.position = 0
        self.tosses_consumed = 0

    @property
    def length(self) -> int:
        return len(self.bits)

    def next_bit(self) -> int:
        if self.position >= len(self.bits):
            raise SourceExhausted(
                f"tape of length {len(self.bits)} fully consumed"
            )
        bit = self.bits[self.position]
        self.position += 1
        self.tosses_consumed += 1
        return bit


class GeneratorSource(CoinSource):
    """Seeded PCG64 stream emitting exact Bernoulli(bias) bits."""

    kind = "seeded-generator"

    def __init__(self, seed: int, bias: Fraction):
        bias = Fraction(bias)
        if not 0 < bias < 1:
            raise ValueError("bias must lie strictly between 0 and 1")
        self.seed = int(seed) & _MASK64
        self.bias = bias
        self.tosses_consumed = 0
        self._rng = np.random.Generator(np.random.PCG64(self.seed))
        # heads iff u < q, ambiguous (extend) iff u == q and 2**64 p not integer
        self._q = (bias.numerator << 64) // bias.denominator
        self._exact = (bias.numerator << 64) % bias.denominator == 0

    def _resolve_boundary(self) -> int:
        # u landed exactly on the truncated expansion: refine bit by bit
        num, den = self.bias.numerator, self.bias.denominator
        u = self._q
        t = 64
        while True:
            u = (u << 1) | int(self._rng.integers(0, 2))
            t += 1
            if (u + 1) * den <= num << t:
                return 1
            if u * den >= num << t:
                return 0

    def next_bit(self) -> int:
        self.tosses_consumed += 1
        u = int(self._rng.integers(0, 1 << 64, dtype=np.uint64))
        if u < self._q:
            return 1
        if self._exact or u > self._q:
            return 0
        return self._resolve_boundary()

    def draw_bits(self, count: int) -> list[int]:
        if count <= 0:
            return []
        u = self._rng.integers(0, 1 << 64, size=count, dtype=np.uint64)
        bits = (u < np.uint64(self._q)).astype(np.uint8)
        if not self._exact:
            for i in np.nonzero(u == np.uint64(self._q))[0]:
                bits[i] = self._resolve_boundary()
        self.tosses_consumed += count
        return bits.tolist()

    def fork_independent(self, stream_index: int) -> "GeneratorSource":
        if stream_index < 0:
            raise ValueError("stream_index must be nonnegative")
        return GeneratorSource(mix_seed(self.seed, stream_index), self.bias)


def load_tape(path) -> TapeSource:
    """Read the tape file format: one ASCII '0'/'1' per bit, newline-terminated."""
    bits = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            ch = line.rstrip("\n")
            if ch not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: invalid tape character {ch!r}")
            bits.append(int(ch))
    return TapeSource(bits)


def save_tape(path, bits) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for b in bits:
            fh.write(f"{int(b)}\n")

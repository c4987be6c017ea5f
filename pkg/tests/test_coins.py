"""Bit sources: tapes, seeded generators, forking, persistence."""

from fractions import Fraction

import pytest

from coinfactory import GeneratorSource, TapeSource, load_tape, mix_seed, save_tape
from coinfactory.errors import SourceExhausted


def test_tape_replays_bits_and_counts():
    tape = TapeSource([1, 0, 1, 1])
    assert tape.tosses_consumed == 0
    assert [tape.next_bit() for _ in range(4)] == [1, 0, 1, 1]
    assert tape.tosses_consumed == 4


def test_tape_exhaustion():
    tape = TapeSource([1])
    tape.next_bit()
    with pytest.raises(SourceExhausted):
        tape.next_bit()


def test_tape_round_trip(tmp_path):
    path = tmp_path / "bits.tape"
    save_tape(path, [0, 1, 1, 0, 1])
    back = load_tape(path)
    assert [back.next_bit() for _ in range(5)] == [0, 1, 1, 0, 1]


def test_generator_deterministic_by_seed():
    a = GeneratorSource(2024, Fraction(1, 3))
    b = GeneratorSource(2024, Fraction(1, 3))
    assert a.draw_bits(200) == b.draw_bits(200)
    assert a.tosses_consumed == 200


def test_generator_draw_bits_matches_next_bit():
    # the batched path must produce the same stream as bit-at-a-time
    a = GeneratorSource(7, Fraction(2, 7))
    b = GeneratorSource(7, Fraction(2, 7))
    assert a.draw_bits(64) == [b.next_bit() for _ in range(64)]


def test_generator_seeds_differ():
    a = GeneratorSource(1, Fraction(1, 2)).draw_bits(64)
    b = GeneratorSource(2, Fraction(1, 2)).draw_bits(64)
    assert a != b


def test_generator_respects_bias():
    # seeded, so this is a frozen regression value rather than a flaky check
    bits = GeneratorSource(5, Fraction(1, 3)).draw_bits(30000)
    freq = sum(bits) / 30000
    assert abs(freq - 1 / 3) < 0.01


def test_generator_dyadic_bias_exact_path():
    bits = GeneratorSource(9, Fraction(1, 2)).draw_bits(10000)
    assert abs(sum(bits) / 10000 - 0.5) < 0.02
    assert GeneratorSource(9, Fraction(1, 2)).draw_bits(100) == bits[:100]


def test_fork_independent():
    base = GeneratorSource(42, Fraction(1, 4))
    f1 = base.fork_independent(1)
    f2 = base.fork_independent(2)
    f1_again = GeneratorSource(42, Fraction(1, 4)).fork_independent(1)
    s1 = f1.draw_bits(128)
    assert s1 == f1_again.draw_bits(128)
    assert s1 != f2.draw_bits(128)


def test_mix_seed_spreads():
    seen = {mix_seed(3, i) for i in range(2000)}
    assert len(seen) == 2000
    assert mix_seed(3, 7) == mix_seed(3, 7)
    assert mix_seed(3, 7) != mix_seed(4, 7)

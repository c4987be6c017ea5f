"""End-to-end acceptance gate.

One test per advertised guarantee, named so the -v listing reads as a
checklist. Statistical tolerances are three binomial standard errors at
the stated run counts; seeds are fixed, so every run is reproducible bit
for bit. Exact claims are asserted in rational arithmetic, with dyadic
surrogates standing in for square roots and exponentials on the bound
side (sqrt rounded down, exp rounded up, so the asserted inequality is
at least as strong as the analytic one except for the documented 2^-56
slack in the exponential).
"""

import math
import subprocess
import sys
from fractions import Fraction

import pytest

from coinfactory import (
    ContinuousParams,
    DoublingParams,
    GeneratorSource,
    HomogeneousPoly,
    RankContext,
    SmoothnessParams,
    WalkConfig,
    compile_to_plan,
    constant_plan,
    continuous_schedule,
    decide,
    doubling_raw_schedule,
    doubling_schedule,
    envelope_eval,
    feasibility_check,
    monomial_schedule,
    monte_carlo,
    oracle_enumerate,
    parse,
    plan_bias_interval,
    polya_exponent,
    rational_sin,
    reflection_count,
    simulate,
    smooth_schedule,
    validate_schedule,
    von_neumann_bit,
    walk_bias_exact,
    walk_error_bound,
)
from coinfactory.lang import Interval
from coinfactory.numerics import comb, dyadic_sqrt_lower, exp_neg_upper
from coinfactory.schedules import MODE_LIPSCHITZ
from coinfactory.verify import HypergeomSpec, hypergeom_pmf

from helpers import brute_decide, brute_reflection_count, conv_expect_numerators, materialize_sets


@pytest.fixture(scope="module")
def smooth_sched():
    return smooth_schedule(SmoothnessParams(
        lambda p: Fraction(1, 2) + p / 4, MODE_LIPSCHITZ, Fraction(1, 4), Fraction(1, 4)
    ))


@pytest.fixture(scope="module")
def vn_report():
    # shared by the frequency, cost, and tail-rate checks below
    return monte_carlo(von_neumann_bit, Fraction(3, 10), 100000, 23,
                       tail_points=[2, 4, 6, 8, 10, 12, 14, 16])


# --- 1: envelope validity of the doubling schedule --------------------------------


def test_criterion_1_doubling_envelope_validates_clean_to_1024():
    sched = doubling_schedule(DoublingParams(Fraction(3, 25)))
    report = validate_schedule(sched, 1024)
    assert report.max_checkpoint == 1024
    assert report.violations == []


def test_criterion_1_raw_counts_satisfy_consistency_without_clamping():
    # same coefficient formulas with the idle phase stripped: the nesting
    # inequalities hold on their own even where the bounds class fails
    raw = doubling_raw_schedule(DoublingParams(Fraction(3, 25)))
    report = validate_schedule(raw, 1024, check_bounds=False)
    assert report.violations == []


# --- 2: exhaustive oracle equals the envelope evaluation ---------------------------


def test_criterion_2_oracle_brackets_equal_envelope_values(smooth_sched):
    for sched, p in ((monomial_schedule(2), Fraction(1, 3)),
                     (smooth_sched, Fraction(3, 10))):
        for depth in (8, 16):
            accept, undecided = oracle_enumerate(sched, depth, p)
            values = envelope_eval(sched, p, depth)
            assert accept == values.g
            assert accept + undecided == values.h


def test_criterion_2_decide_matches_materialized_sets_at_depth_16(smooth_sched):
    for sched in (monomial_schedule(2), smooth_sched):
        sets = materialize_sets(sched, 16)
        ctx = RankContext(sched)
        for m in range(1 << 16):
            word = tuple((m >> (15 - j)) & 1 for j in range(16))
            assert decide(ctx, word) is brute_decide(sched, word, sets)


# --- 3: Monte Carlo bias at fixed seeds ----------------------------------------------


def test_criterion_3a_von_neumann_frequency_and_cost(vn_report):
    assert abs(vn_report.estimate - Fraction(1, 2)) <= Fraction(47, 10000)
    assert abs(vn_report.toss_mean * Fraction(21, 100) - 1) <= Fraction(1, 50)


def test_criterion_3b_constant_third_frequency():
    report = monte_carlo(constant_plan(Fraction(1, 3)), Fraction(3, 10), 100000, 13)
    assert abs(report.estimate - Fraction(1, 3)) <= Fraction(45, 10000)


def test_criterion_3c_lipschitz_factory_frequency(smooth_sched):
    report = monte_carlo(smooth_sched, Fraction(3, 10), 100000, 17,
                         max_tosses=4096, undecided="midpoint", threads=4)
    assert abs(report.estimate - Fraction(23, 40)) <= Fraction(47, 10000)


CRITERION_3D = """
from fractions import Fraction
from coinfactory import compile_to_plan, monte_carlo, parse
from coinfactory.lang import Interval

plan = compile_to_plan(parse("p / (p + 1/5)"),
                       Interval(Fraction(1, 10), Fraction(2, 5)),
                       backend=("approx", 2000))
report = monte_carlo(plan, Fraction(1, 5), 100000, 1)
print(report.estimate)
"""


def test_criterion_3d_compiled_quotient_frequency():
    try:
        proc = subprocess.run([sys.executable, "-c", CRITERION_3D],
                              capture_output=True, text=True, timeout=75)
    except subprocess.TimeoutExpired:
        pytest.fail(
            "10^5 Monte Carlo runs of the compiled quotient with the walk-2000 "
            "backend did not finish inside 75 s. The rescaling chain stacks "
            "doubling stages whose 2000-step walks each consume coins from the "
            "stage below, so the per-run toss count multiplies across stages "
            "and exceeds any practical budget; see the two companion tests for "
            "the analytic certification of the same target.")
    assert proc.returncode == 0, proc.stderr
    estimate = Fraction(proc.stdout.strip())
    assert abs(estimate - Fraction(1, 2)) <= Fraction(47, 10000)


def test_criterion_3d_companion_quotient_bias_certified_exactly():
    plan = compile_to_plan(parse("p / (p + 1/5)"),
                           Interval(Fraction(1, 10), Fraction(2, 5)),
                           backend=("exact",))
    assert plan_bias_interval(plan, Fraction(1, 5)) == (Fraction(1, 2), Fraction(1, 2))


def test_criterion_3d_companion_quotient_bias_bracketed_under_walk_backend():
    plan = compile_to_plan(parse("p / (p + 1/5)"),
                           Interval(Fraction(1, 10), Fraction(2, 5)),
                           backend=("approx", 2000))
    lo, hi = plan_bias_interval(plan, Fraction(1, 5))
    assert lo <= Fraction(1, 2) <= hi
    assert hi - lo <= Fraction(1, 10 ** 8)


# --- 4: walk primitives are exact ------------------------------------------------------


def test_criterion_4_reflection_counts_match_path_enumeration():
    for n in range(1, 15):
        for k in range(n + 1):
            assert reflection_count(n, k) == brute_reflection_count(n, k)


def test_criterion_4_exhaustive_tape_acceptance_equals_closed_form():
    accept, undecided = oracle_enumerate(WalkConfig(14), 14, Fraction(1, 4))
    assert undecided == 0
    assert accept == walk_bias_exact(14, Fraction(1, 4)) == Fraction(33431251, 67108864)


def test_criterion_4_bias_undershoot_within_exponential_bound():
    for n in (64, 256, 1024, 4096):
        for i in range(1, 10):
            p = Fraction(i, 20)
            gap = 2 * p - walk_bias_exact(n, p)
            assert 0 <= gap <= walk_error_bound(n, p)


# --- 5: split-count expectation identities and inequalities -----------------------------
# X counts the ones falling in the first half when a word with k ones out
# of 2n letters is split in two; all claims are exact statements about
# E f(X/n) under that distribution.


def test_criterion_5_split_count_mean_variance_and_concentration():
    for n in range(1, 65):
        for k in range(0, 2 * n + 1):
            spec = HypergeomSpec(n, k)
            lo_i, hi_i = max(0, k - n), min(n, k)
            weights = [(i, hypergeom_pmf(spec, i)) for i in range(lo_i, hi_i + 1)]
            m = Fraction(k, 2 * n)
            mean = sum(w * i for i, w in weights) / n
            assert mean == m
            var = sum(w * i * i for i, w in weights) / (n * n) - m * m
            assert var == Fraction(k * (2 * n - k), 4 * (2 * n - 1) * n * n)
            assert var <= Fraction(1, 2 * n)
            for a in (Fraction(1, 8), Fraction(1, 4)):
                tail = sum(w for i, w in weights if abs(Fraction(i, n) - m) > a)
                assert tail <= 2 * exp_neg_upper(2 * a * a * n)


def test_criterion_5_smoothing_distance_for_lipschitz_and_quadratic_targets():
    # f = min(2t, 3/5) has Lipschitz constant 2: |E f(X/n) - f(E X/n)| is
    # below 2*sqrt(1/2n), below sqrt(2/n) uniformly, and below
    # 8*exp(-2n/25) wherever the mean is at most 1/10. The quadratic t^2
    # has curvature 2, so its distance is exactly the variance, at most
    # 1/(2n). Right sides are dyadic: sqrt rounded down (stronger claim),
    # exp rounded up (documented surrogate).
    for n in range(1, 257):
        den_f = 5 * n
        fnums = [min(10 * i, 3 * n) for i in range(n + 1)]
        conv_f = conv_expect_numerators(n, fnums)
        snums = [i * i for i in range(n + 1)]
        conv_s = conv_expect_numerators(n, snums)
        rhs_lip = 2 * dyadic_sqrt_lower(Fraction(1, 2 * n))
        rhs_uniform = dyadic_sqrt_lower(Fraction(2, n))
        rhs_edge = 8 * exp_neg_upper(Fraction(2 * n, 25))
        rhs_quad = Fraction(1, 2 * n)
        for k in range(0, 2 * n + 1):
            c2 = comb(2 * n, k)
            m = Fraction(k, 2 * n)
            ef = Fraction(conv_f[k], c2 * den_f)
            dist = abs(ef - Fraction(min(10 * k, 6 * n), 10 * n))
            assert dist <= rhs_lip
            assert dist <= rhs_uniform
            if m <= Fraction(1, 10):
                assert dist <= rhs_edge
            es = Fraction(conv_s[k], c2 * n * n)
            dist2 = abs(es - m * m)
            assert dist2 == Fraction(k * (2 * n - k), 4 * (2 * n - 1) * n * n)
            assert dist2 <= rhs_quad


def test_criterion_5_hinge_expectations_have_exponential_tails():
    # hinges (m - a - t)+ and (t - m - a)+ kink one radius away from the
    # mean; their expectations decay like the two tail bounds 6*exp(-2a^2 n)
    # and 4*exp(-2a^2 n). Inner sums stay in integers: the unit is
    # 1/(2n*a_den), and terms vanish past the kink, so each loop breaks
    # at the first nonpositive numerator.
    for n in range(1, 257):
        row = [comb(n, i) for i in range(n + 1)]
        for a_num, a_den in ((1, 8), (1, 4)):
            e4 = 4 * exp_neg_upper(Fraction(2 * a_num * a_num * n, a_den * a_den))
            e6 = Fraction(3, 2) * e4
            for k in range(0, 2 * n + 1):
                c2 = comb(2 * n, k)
                lo_i, hi_i = max(0, k - n), min(n, k)
                base = k * a_den - 2 * n * a_num
                slo = 0
                for i in range(lo_i, hi_i + 1):
                    u = base - 2 * a_den * i
                    if u <= 0:
                        break
                    slo += u * row[i] * comb(n, k - i)
                assert Fraction(slo, 2 * n * a_den * c2) <= e6
                base2 = k * a_den + 2 * n * a_num
                shi = 0
                for i in range(hi_i, lo_i - 1, -1):
                    u = 2 * a_den * i - base2
                    if u <= 0:
                        break
                    shi += u * row[i] * comb(n, k - i)
                assert Fraction(shi, 2 * n * a_den * c2) <= e4


# --- 6: positivity exponents and continuous targets --------------------------------------


def test_criterion_6_homogeneous_positivity_exponents():
    assert polya_exponent(HomogeneousPoly(2, (1, -1, 1)), 64) == 1
    assert polya_exponent(HomogeneousPoly(2, (1, Fraction(-3, 2), 1)), 64) == 5


def test_criterion_6_continuous_target_envelopes_bracket_within_tolerance():
    f = lambda p: Fraction(1, 2) + rational_sin(p) / 8
    params = ContinuousParams(f, Fraction(1, 4), (5, 6, 7))
    sched = continuous_schedule(params)
    checkpoints = sched.checkpoints_upto(1 << 13)
    assert checkpoints == [32, 64, 128]
    assert validate_schedule(sched, checkpoints[-1]).violations == []
    for level_index, i in enumerate(params.levels):
        n = checkpoints[level_index]
        tol = Fraction(4, 1 << i)
        for p in (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)):
            values = envelope_eval(sched, p, n)
            target = f(p)
            assert values.g <= target <= values.h
            assert target - values.g <= tol
            assert values.h - target <= tol


# --- 7: tail rates -------------------------------------------------------------------------


def test_criterion_7a_von_neumann_tail_is_geometric(vn_report):
    curve = dict(vn_report.tail_curve)
    rate = Fraction(29, 50)
    for m in range(1, 9):
        expected = rate ** m
        sigma = math.sqrt(float(expected) * (1 - float(expected)) / vn_report.runs)
        assert abs(float(curve[2 * m] - expected)) <= 3 * sigma


def test_criterion_7b_smooth_width_shrinks_at_square_root_rate(smooth_sched):
    widths = {}
    for n in (64, 256, 1024):
        values = envelope_eval(smooth_sched, Fraction(3, 10), n)
        widths[n] = values.h - values.g
    for small, large in ((64, 256), (256, 1024)):
        ratio = widths[large] / widths[small]
        assert Fraction(2, 5) <= ratio <= Fraction(3, 5)


# --- 8: full-scale doubling smoke run -------------------------------------------------------


def test_criterion_8_doubling_smoke_run_terminates_past_n0():
    sched = doubling_schedule(DoublingParams(Fraction(3, 25)))
    n0 = sched.metadata()["n0"]
    outcome = simulate(sched, GeneratorSource(2024, Fraction(1, 4)))
    assert outcome.bit in (0, 1)
    assert outcome.tosses >= n0

    widths = []
    for n in (n0, 2 * n0, 4 * n0):
        values = envelope_eval(sched, Fraction(1, 4), n, mode="float-with-bound")
        widths.append(values.h - values.g)
    assert widths[0] > widths[1] > widths[2] > 0
    assert widths[1] / widths[0] < 0.9
    assert widths[2] / widths[1] < 0.9


# --- 9: feasibility diagnostic ---------------------------------------------------------------


def test_criterion_9_feasibility_accepts_capped_and_rejects_uncapped_double():
    grid = [Fraction(i, 20) for i in range(1, 10)]
    accepted = feasibility_check(lambda p: min(2 * p, Fraction(4, 5)), grid, 8)
    assert accepted.ok
    assert accepted.n == 3

    rejected = feasibility_check(lambda p: 2 * p, grid + [Fraction(49, 100)], 5)
    assert not rejected.ok
    assert rejected.worst_p == Fraction(49, 100)

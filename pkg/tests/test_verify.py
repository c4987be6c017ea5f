"""Ground-truth machinery: oracle, pmf/Bernstein utilities, Monte Carlo."""

from fractions import Fraction

import pytest

from coinfactory import (
    HypergeomSpec,
    bernstein_eval,
    constant_plan,
    double_plan,
    feasibility_check,
    hypergeom_pmf,
    identity_plan,
    monomial_schedule,
    monte_carlo,
    oracle_enumerate,
    report_from_json,
    report_to_json,
    save_report,
    smooth_schedule,
    SmoothnessParams,
    tail_profile,
    von_neumann_bit,
    walk_bias_exact,
    with_range,
)
from coinfactory.errors import DepthTooLarge, InsufficientTail, InvalidParams
from coinfactory.schedules import MODE_LIPSCHITZ

from helpers import hypergeom_expect


# --- exhaustive oracle ---------------------------------------------------------


def test_oracle_monomial_is_exact_at_depth_two():
    assert oracle_enumerate(monomial_schedule(2), 2, Fraction(1, 3)) == (
        Fraction(1, 9), Fraction(0))


def test_oracle_fair_constant_brackets_half():
    # expansion scheme for 1/2: accept on a first fair bit of 0, reject
    # only after a second fair bit of 1. Four tosses give two pair draws,
    # each yielding a fair bit with chance 2pq = 4/9 at p = 1/3, so
    # accept = 4/9 * (1 + 5/9) / 2 and reject = (2/9)^2.
    accept, undecided = oracle_enumerate(constant_plan(Fraction(1, 2)), 4, Fraction(1, 3))
    assert (accept, undecided) == (Fraction(28, 81), Fraction(49, 81))
    assert accept <= Fraction(1, 2) <= accept + undecided


def test_oracle_walk_matches_closed_form():
    plan = double_plan(with_range(identity_plan(), Fraction(1, 10), Fraction(2, 5)),
                       Fraction(1, 40), backend=("approx", 14))
    accept, undecided = oracle_enumerate(plan, 14, Fraction(1, 4))
    assert accept == walk_bias_exact(14, Fraction(1, 4))
    assert undecided == 0


def test_oracle_depth_guards():
    with pytest.raises(DepthTooLarge):
        oracle_enumerate(monomial_schedule(2), 21, Fraction(1, 3))
    with pytest.raises(InvalidParams):
        oracle_enumerate(monomial_schedule(2), 4, Fraction(3, 2))


def test_oracle_triple_agreement_on_cheap_targets():
    # the oracle bracket must contain each target's exact bias at depth 10
    from coinfactory import average, complement, plan_bias_interval

    p = Fraction(3, 10)
    targets = [
        (constant_plan(Fraction(1, 3)), Fraction(1, 3)),
        (average(identity_plan(), complement(identity_plan())), Fraction(1, 2)),
        (monomial_schedule(2), p * p),
    ]
    for target, bias in targets:
        accept, undecided = oracle_enumerate(target, 10, p)
        assert accept <= bias <= accept + undecided


# --- hypergeometric pmf -----------------------------------------------------------


def test_pmf_example_and_normalization():
    spec = HypergeomSpec(2, 2)
    assert [hypergeom_pmf(spec, i) for i in range(3)] == [
        Fraction(1, 6), Fraction(2, 3), Fraction(1, 6)]
    assert hypergeom_pmf(spec, -1) == 0
    assert hypergeom_pmf(spec, 3) == 0
    for n in (1, 3, 7, 16):
        for k in range(0, 2 * n + 1):
            s = HypergeomSpec(n, k)
            assert sum(hypergeom_pmf(s, i) for i in range(n + 1)) == 1


def test_pmf_mean_identity():
    for n in (2, 5, 12):
        for k in range(0, 2 * n + 1):
            mean = hypergeom_expect(n, k, lambda t: t)
            assert mean == Fraction(k, 2 * n)


def test_hypergeom_spec_validation():
    with pytest.raises(InvalidParams):
        HypergeomSpec(3, 7)


# --- Bernstein evaluation ------------------------------------------------------------


def test_bernstein_reproduces_linear():
    for n in (1, 5, 32):
        assert bernstein_eval(lambda t: t, n, Fraction(3, 7)) == Fraction(3, 7)


def test_bernstein_capped_double_example():
    f = lambda t: min(2 * t, Fraction(1))
    assert bernstein_eval(f, 2, Fraction(1, 2)) == Fraction(3, 4)


def test_bernstein_uniform_convergence_echo():
    f = lambda t: min(2 * t, Fraction(1))
    grid = [Fraction(3, 8), Fraction(1, 2), Fraction(5, 8)]
    err_1024 = max(abs(bernstein_eval(f, 1024, x) - f(x)) for x in grid)
    err_4096 = max(abs(bernstein_eval(f, 4096, x) - f(x)) for x in grid)
    assert err_4096 < err_1024


# --- feasibility diagnostic ------------------------------------------------------------


def test_feasibility_accepts_capped_double():
    grid = [Fraction(i, 20) for i in range(1, 10)]
    result = feasibility_check(lambda p: min(2 * p, Fraction(4, 5)), grid, 8)
    assert result.ok and result.n == 3
    # at n = 2 the worst grid point is p = 9/20: 0.2025 > 0.2
    shallow = feasibility_check(lambda p: min(2 * p, Fraction(4, 5)), grid, 2)
    assert not shallow.ok and shallow.worst_p == Fraction(9, 20)


def test_feasibility_rejects_plain_double_near_half():
    grid = [Fraction(i, 20) for i in range(1, 10)] + [Fraction(49, 100)]
    result = feasibility_check(lambda p: 2 * p, grid, 5)
    assert not result.ok
    assert result.worst_p == Fraction(49, 100)


def test_feasibility_constant_half():
    result = feasibility_check(lambda p: Fraction(1, 2),
                               [Fraction(i, 20) for i in range(1, 10)], 8)
    assert result.n == 1


def test_feasibility_rejects_invalid_target():
    with pytest.raises(InvalidParams):
        feasibility_check(lambda p: 2 * p, [Fraction(3, 4)], 3)


# --- Monte Carlo harness ------------------------------------------------------------------


def smooth_target():
    return smooth_schedule(SmoothnessParams(
        lambda p: Fraction(1, 2) + p / 4, MODE_LIPSCHITZ, Fraction(1, 4), Fraction(1, 4)
    ))


def test_monte_carlo_wilson_contains_truth():
    report = monte_carlo(constant_plan(Fraction(1, 3)), Fraction(3, 10), 20000, 7)
    assert report.wilson_lo <= Fraction(1, 3) <= report.wilson_hi
    assert report.wilson_lo <= report.estimate <= report.wilson_hi
    assert report.successes <= report.runs
    assert report.toss_q50 <= report.toss_q90 <= report.toss_q99 <= report.toss_max


def test_monte_carlo_deterministic_and_thread_invariant():
    args = (von_neumann_bit, Fraction(3, 10), 4000, 21)
    a = monte_carlo(*args)
    b = monte_carlo(*args)
    c = monte_carlo(*args, threads=4)
    assert report_to_json(a) == report_to_json(b) == report_to_json(c)


def test_monte_carlo_rejects_zero_runs():
    with pytest.raises(InvalidParams):
        monte_carlo(constant_plan(Fraction(1, 3)), Fraction(3, 10), 0, 7)


def test_monte_carlo_undecided_policies():
    sched = smooth_target()
    report = monte_carlo(sched, Fraction(3, 10), 200, 3,
                         max_tosses=4, undecided="midpoint")
    assert report.undecided == 200  # the cap is below the first active checkpoint
    assert report.estimate == Fraction(1, 2)
    from coinfactory.errors import Undecided

    with pytest.raises(Undecided):
        monte_carlo(sched, Fraction(3, 10), 200, 3, max_tosses=4)


def test_monte_carlo_tail_curve_monotone():
    report = monte_carlo(von_neumann_bit, Fraction(3, 10), 4000, 21)
    probs = [q for _, q in report.tail_curve]
    assert all(b <= a for a, b in zip(probs, probs[1:]))


# --- tail profiling -----------------------------------------------------------------------


def test_tail_fit_von_neumann_geometric():
    report = monte_carlo(von_neumann_bit, Fraction(3, 10), 20000, 5)
    fit = tail_profile(report)
    # discards happen per pair: per-toss rate squared ~ p^2 + (1-p)^2 = 0.58
    per_pair = float(fit.rho_hat) ** 2
    assert abs(per_pair - 0.58) <= 0.058


def test_tail_fit_needs_positive_points():
    report = monte_carlo(identity_plan(), Fraction(3, 10), 500, 3)
    with pytest.raises(InsufficientTail):
        tail_profile(report)


# --- report persistence ----------------------------------------------------------------------


def test_report_json_round_trip(tmp_path):
    import json

    report = monte_carlo(constant_plan(Fraction(1, 3)), Fraction(3, 10), 400, 9)
    assert report_from_json(report_to_json(report)) == report
    path = tmp_path / "report.json"
    save_report(report, path)
    assert report_from_json(json.loads(path.read_text())) == report


def test_report_rationals_serialized_as_strings():
    report = monte_carlo(constant_plan(Fraction(1, 3)), Fraction(3, 10), 400, 9)
    doc = report_to_json(report)
    assert doc["p"] == "3/10"
    assert isinstance(doc["estimate"], str) and "/" in doc["estimate"]

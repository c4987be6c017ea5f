"""Command-line contract: exit codes, output lines, file side effects."""

import json

import pytest

from coinfactory.cli import main


def run(argv, capsys):
    rc = main(argv)
    return rc, capsys.readouterr().out


# --- compile -------------------------------------------------------------------


def test_compile_writes_plan_file(tmp_path, capsys):
    out = tmp_path / "plan.json"
    rc, text = run(["compile", "p + 1/5", "--domain", "1/10:2/5", "--out", str(out)], capsys)
    assert rc == 0
    assert text.startswith(f"wrote {out} hash ")
    doc = json.loads(out.read_text())
    assert doc["root"]["kind"] == "double"


def test_compile_without_out_prints_hash(capsys):
    rc, text = run(["compile", "p^2", "--domain", "1/10:2/5"], capsys)
    assert rc == 0
    assert text.startswith("compiled hash ")


def test_compile_reports_bound_errors(capsys):
    rc, text = run(["compile", "p + p", "--domain", "1/10:1/2"], capsys)
    assert rc == 2
    assert "error at 0..5" in text
    assert "sum can reach 1" in text


def test_compile_reports_syntax_errors(capsys):
    rc, text = run(["compile", "p +", "--domain", "1/10:2/5"], capsys)
    assert rc == 2
    assert "syntax error at offset 3" in text


# --- simulate ------------------------------------------------------------------


def test_simulate_walk_writes_report(tmp_path, capsys):
    path = tmp_path / "walk.json"
    rc, text = run(["simulate", "--target", "walk:200", "--p", "1/4",
                    "--runs", "400", "--seed", "42", "--report", str(path)], capsys)
    assert rc == 0
    assert text.startswith("estimate ")
    assert "wilson997 [" in text and "tosses mean" in text
    doc = json.loads(path.read_text())
    assert doc["runs"] == 400
    assert doc["p"] == "1/4"


def test_simulate_is_deterministic(tmp_path, capsys):
    args = ["simulate", "--target", "monomial:2", "--p", "1/3",
            "--runs", "300", "--seed", "9"]
    first = run(args + ["--report", str(tmp_path / "a.json")], capsys)
    second = run(args + ["--report", str(tmp_path / "b.json")], capsys)
    assert first == second
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_simulate_missing_plan_is_io_error(capsys):
    rc, text = run(["simulate", "--plan", "/nonexistent/plan.json",
                    "--p", "1/4", "--runs", "10"], capsys)
    assert rc == 1
    assert text.startswith("io error:")


def test_simulate_compiled_plan_round_trip(tmp_path, capsys):
    plan_path = tmp_path / "plan.json"
    rc, _ = run(["compile", "p^2", "--domain", "1/10:2/5",
                 "--out", str(plan_path)], capsys)
    assert rc == 0
    rc, text = run(["simulate", "--plan", str(plan_path), "--p", "1/3",
                    "--runs", "200", "--seed", "4"], capsys)
    assert rc == 0
    assert text.startswith("estimate ")


# --- verify ---------------------------------------------------------------------


def test_verify_monomial_brackets_match_envelope(capsys):
    rc, text = run(["verify", "--target", "monomial:2", "--depth", "8",
                    "--p", "1/3"], capsys)
    assert rc == 0
    assert "oracle brackets at depth 8: [1/9, 1/9]" in text
    assert "envelope evaluation matches exactly" in text


def test_verify_idle_doubling_brackets_are_vacuous(capsys):
    rc, text = run(["verify", "--target", "double:3/25", "--depth", "16",
                    "--p", "1/4"], capsys)
    assert rc == 0
    assert "oracle brackets at depth 16: [0/1, 1/1]" in text
    assert "envelope evaluation matches exactly" in text


def test_verify_walk_closed_form(capsys):
    rc, text = run(["verify", "--target", "walk:14", "--depth", "14",
                    "--p", "1/4"], capsys)
    assert rc == 0
    assert "oracle brackets at depth 14: [33431251/67108864, 33431251/67108864]" in text
    assert "walk enumeration matches the closed form exactly" in text


def test_verify_plan_bias_interval_overlaps_bracket(tmp_path, capsys):
    plan_path = tmp_path / "plan.json"
    run(["compile", "p^2", "--domain", "1/10:2/5", "--out", str(plan_path)], capsys)
    rc, text = run(["verify", "--plan", str(plan_path), "--depth", "8",
                    "--p", "1/3"], capsys)
    assert rc == 0
    assert "plan bias interval [1/9, 1/9]" in text


# --- envelope --------------------------------------------------------------------


def test_envelope_clean_schedule_with_dump(tmp_path, capsys):
    csv_path = tmp_path / "cells.csv"
    rc, text = run(["envelope", "--target", "monomial:2", "--max-n", "64",
                    "--dump", str(csv_path)], capsys)
    assert rc == 0
    assert "up to n = 64" in text
    assert "zero violations" in text
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "n,k,count_a,count_b"


def test_envelope_corrupt_fixture_pinpoints_cell(capsys):
    rc, text = run(["envelope", "--target", "fixture:corrupt-monomial",
                    "--max-n", "16"], capsys)
    assert rc == 3
    assert "violation: lower-consistency at (n=4, k=2)" in text


def test_envelope_rejects_non_schedule_target(capsys):
    rc, text = run(["envelope", "--target", "walk:10", "--max-n", "16"], capsys)
    assert rc == 3
    assert text.startswith("error:")


# --- tails ------------------------------------------------------------------------


def test_tails_fits_saved_report(tmp_path, capsys):
    # a constant plan stops at the first fair von Neumann heads, so its
    # toss count is geometric and the fit has a real slope to find
    plan_path = tmp_path / "third.json"
    rc, _ = run(["compile", "1/3", "--domain", "1/10:2/5",
                 "--out", str(plan_path)], capsys)
    assert rc == 0
    path = tmp_path / "third-report.json"
    rc, _ = run(["simulate", "--plan", str(plan_path), "--p", "1/2",
                 "--runs", "4000", "--seed", "5", "--report", str(path)], capsys)
    assert rc == 0
    rc, text = run(["tails", "--report", str(path)], capsys)
    assert rc == 0
    assert text.startswith("rho_hat ")
    assert "window" in text and "residual" in text


def test_unknown_target_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--target", "mystery:1", "--depth", "4", "--p", "1/3"])
    assert info.value.code == 2

"""Acceptance criteria 1-14, each at its stated scale and tolerance.

Every test prints one ``[criterion N] PASS|FAIL: ...`` line to the terminal.
"""

import math
import time
from fractions import Fraction as F

import pytest

from kmtcouple import lemmas as L
from kmtcouple.cli import main
from kmtcouple.ep import run_ep_experiment
from kmtcouple.monotone import abs_walk_pmf, comonotone_couple, quantile_coupling_sweep, signed_couple_2s_4s, signed_coupling_sweep
from kmtcouple.report import read_json
from kmtcouple.rw import run_rw_experiment
from kmtcouple.stein import stein_crossvalidate
from kmtcouple.theorems import hoeffding_sweep, stationary_corpus, binomial_scaling_sweep, sample_sum_sweep

SEED = 20240601


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_c01_mass_domination(report):
    t0 = time.perf_counter()
    r = L.check_mass_domination(300)
    dt = time.perf_counter() - t0
    report(1, r.passed and r.violation_count == 0 and dt <= 60,
           f"m<=300 violations={r.violation_count} runtime={dt:.1f}s")


def test_c02_shifted_domination(report):
    r = L.check_shifted_domination(200)
    special = r.extra["special_case_pairs_checked"]
    report(2, r.passed and special > 0,
           f"m<=200 violations={r.violation_count} special-case pairs={special}")


def test_c03_tail_domination(report):
    r = L.check_tail_domination(300)
    part1 = all(row["part1_pass"] for row in r.per_param)
    m0 = r.extra["part2_threshold_m0"]
    ok = part1 and m0 is not None and m0 <= 300 and all(row["part2_pass"] for row in r.per_param if row["m"] >= m0)
    report(3, ok, f"part1 over m<=300: {part1}; part2 m0={m0} range={r.extra['part2_tested_range']}")


def test_c04_signed_coupling(report):
    s = signed_coupling_sweep(2000)
    t = comonotone_couple(abs_walk_pmf(2, 4), abs_walk_pmf(8, 2))
    got = {(int(a), int(b)): m for a, b, m in t.value_pairs()}
    want = {(0, 0): 70, (0, 2): 58, (4, 2): 54, (4, 4): 56, (4, 6): 16, (4, 8): 2}
    pairs_ok = got == {k: F(v, 256) for k, v in want.items()}
    n2 = signed_couple_2s_4s(2)
    ok = s["n0"] is not None and s["n0"] <= 100 and s["n_range"][1] == 2000 and pairs_ok and n2.passed
    report(4, ok, f"n0={s['n0']} through n=2000; n=2 pairs exact={pairs_ok}")


def test_c05_gaussian_quantile(report):
    s = quantile_coupling_sweep(4096)
    ok = s["n0"] is not None and s["n0"] <= 50 and s["n_range"][1] == 4096
    report(5, ok, f"threshold={s['n0']} through n=4096 min margins abs={s['min_margin_abs']:.4g} "
                  f"diff={s['min_margin_diff']:.4g}")


def test_c06_stein_calculus(report):
    cv = stein_crossvalidate(64)
    counts = {f: cv[f]["instances"] for f in ("binomial", "hypergeometric")}
    bad = {f: cv[f]["n_mismatches"] for f in counts}
    report(6, cv["pass"] and not any(bad.values()), f"instances={counts} mismatches={bad}")


def test_c07_stationary_corpus(report):
    s = stationary_corpus(10**4)
    ok = (s["pass"] and s["max_residual"] <= 1e-10 and s["max_marginal_error"] <= 1e-9
          and s["min_p_diagonal"] >= 1 - 1e-12)
    report(7, ok, f"instances={s['instances']} max_residual={s['max_residual']:.2e} "
                  f"max_marginal_error={s['max_marginal_error']:.2e} min P(H=0)={s['min_p_diagonal']!r}")


def test_c08_binomial_scaling(report):
    assert 8 * 0.25**2 * math.exp(0.5) < 1
    s = binomial_scaling_sweep(64, 0.25)
    ok = s["plateau_pass"] and s["all_instances_pass"] and all(
        r["functional"] <= s["kappa0_hat"] for r in s["instances"])
    report(8, ok, f"kappa0_hat={s['kappa0_hat']:.6f} last-quarter variation={s['last_quarter_variation']:.4%} "
                  f"functional checks on {len(s['instances'])} instances={s['all_instances_pass']}")


def test_c09_sample_sum_couplings(report):
    s = sample_sum_sweep()
    ok = s["part1_pass"] and s["Theta_hat"] >= 0.01 and s["part2_pass"]
    report(9, ok, f"Theta_hat={s['Theta_hat']} M_hat={s['M_hat']} part2 instances={s['part2_instances']}")


def test_c10_hoeffding(report):
    s = hoeffding_sweep(40)
    report(10, s["pass"] and s["violation_count"] == 0,
           f"n<=40 checks={s['checks']} violations={s['violation_count']}")


def test_c11_entropy_ash(report):
    e = L.check_entropy_bound(10**4)
    a = L.check_ash_sandwich(500)
    ok = e.passed and e.worst_margin >= -1e-12 and a.passed
    report(11, ok, f"entropy worst margin={e.worst_margin:.3g}; Ash n<=500 violations={a.violation_count}")


def test_c12_ep_monte_carlo(report):
    t0 = time.perf_counter()
    r = run_ep_experiment([256, 1024, 4096], 2000, SEED)
    dt = time.perf_counter() - t0
    fit = r["fit_mean_D_vs_log_n"]
    ok = fit["r2"] >= 0.95 and r["chi2_tail_pass"] and dt <= 600
    report(12, ok, f"R2={fit['r2']:.5f} slope={fit['slope']:.4f} chi2 tails={r['chi2_tail_pass']} "
                   f"runtime={dt:.1f}s")


def test_c13_rw_monte_carlo(report):
    b = run_rw_experiment([64, 256, 1024, 4096], [0.1], 1000, SEED, mode="bridge", t_values=[0],
                          allow_above_lambda0=True)
    f = run_rw_experiment([256, 1024, 4096], [0.1], 1000, SEED, mode="full", allow_above_lambda0=True)
    r2b = b["fit_log_mgf_t0"]["0.1"]["r2"]
    r2f = f["fit_mean_max_dev_vs_log_n"]["r2"]
    viol = b["pathwise_violations"] + f["pathwise_violations"]
    ok = r2b >= 0.9 and r2f >= 0.95 and viol == 0
    report(13, ok, f"bridge R2={r2b:.5f} full R2={r2f:.5f} pathwise violations={viol}")


def test_c14_reproducibility(report, tmp_path):
    commands = [
        ["verify-lemmas", "--m-max", "20", "--grid", "100", "--ash-n-max", "20"],
        ["stein", "--n-max", "8", "--max-states", "300", "--hoeffding-n-max", "6"],
        ["couple", "--theorem", "1.5", "--n-max", "6"],
        ["embed-ep", "--n", "256", "--reps", "10", "--seed", "7"],
        ["embed-rw", "--n", "64", "--reps", "20", "--seed", "3", "--lambda", "0.05", "--format", "csv"],
        ["embed-rw", "--n", "64", "256", "--reps", "20", "--mode", "full", "--lambda", "0.05"],
    ]
    same = []
    for i, cmd in enumerate(commands):
        a, b = tmp_path / f"a{i}", tmp_path / f"b{i}"
        assert main(cmd + ["--out-dir", str(a)]) == 0
        assert main(cmd + ["--out-dir", str(b)]) == 0
        ma = next(a.glob("*.manifest.json"))
        mb = b / ma.name
        outs = read_json(str(ma))["outputs"]
        same.append(outs == read_json(str(mb))["outputs"]
                    and all((a / k).read_bytes() == (b / k).read_bytes() for k in outs))
        assert main(["report", str(ma), "--rerun", "--out-dir", str(tmp_path / f"r{i}")]) == 0
    report(14, all(same), f"{sum(same)}/{len(same)} commands byte-identical on rerun")

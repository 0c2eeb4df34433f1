"""End-to-end acceptance criteria, each run at its stated size and tolerance.

Every test appends one PASS/FAIL line that the session summary prints.
"""
import math
import time

import pytest

from coalflow.experiments import ExperimentConfig, run_experiment
from coalflow.reference_flows import coalescence_probability


def _run(experiment, tmp_path_factory, **overrides):
    out = tmp_path_factory.mktemp(experiment)
    cfg = ExperimentConfig.for_experiment(experiment, output_dir=str(out), **overrides)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    return report, {s["name"]: s["value"] for s in report.statistics}, time.perf_counter() - t0


def _record(log, tag, ok, detail):
    log.append(f"{tag:5s} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_ac1_one_point_brownian_limit(tmp_path_factory, acceptance_log):
    _, s, secs = _run("one_point_law", tmp_path_factory)
    ks = s["ks_terminal_vs_normal"]
    _record(acceptance_log, "AC1", ks < 0.03 and secs < 30, f"KS(x(0,1), N(0,1)) = {ks:.4f} < 0.03, {secs:.1f}s < 30s")


def test_ac2_lemma_chain_equidistribution(tmp_path_factory, acceptance_log):
    _, s, _ = _run("lemma1_equiv", tmp_path_factory)
    a, b = s["ks_gap_d0=0.1"], s["ks_gap_d0=1.0"]
    _record(acceptance_log, "AC2", a < 0.03 and b < 0.03, f"gap KS d0=0.1: {a:.4f}, d0=1: {b:.4f} (< 0.03 each)")


def test_ac3_scheme_equivalence(tmp_path_factory, acceptance_log):
    _, s, _ = _run("scheme_equiv", tmp_path_factory)
    ks = s["ks_gap_direct_vs_white_noise"]
    _record(acceptance_log, "AC3", ks < 0.05, f"random field vs white noise gap KS = {ks:.4f} < 0.05")


def test_ac4_second_moment_bound(tmp_path_factory, acceptance_log):
    _, s, _ = _run("thm3_moment_bound", tmp_path_factory)
    worst, cells = 0.0, 0
    for m in (50, 200):
        for d in (0.1, 0.5, 1.0):
            value = s[f"second_moment_m={m}_gap={d:g}"]
            worst = max(worst, value / (math.e * d * d * 1.1))
            cells += 1
    _record(acceptance_log, "AC4", cells == 6 and worst <= 1.0,
            f"max E(x(u)-x(v))^2 / (1.1 e (u-v)^2) over 6 cells = {worst:.4f} <= 1")


def test_ac5_joint_characteristic(tmp_path_factory, acceptance_log):
    _, s, _ = _run("joint_characteristic", tmp_path_factory)
    r = s["cross_variation_ratio"]
    _record(acceptance_log, "AC5", 0.9 <= r <= 1.1, f"cross-variation ratio = {r:.4f} in [0.9, 1.1]")


def test_ac6_white_noise_rate(tmp_path_factory, acceptance_log):
    _, s, secs = _run("thm3prime_rate", tmp_path_factory)
    slope = s["sup_norm_rate_slope"]
    ok = -0.75 <= slope <= -0.30 and secs < 600
    _record(acceptance_log, "AC6", ok,
            f"sup-norm error slope = {slope:.3f} in [-0.75, -0.30] "
            f"(one-point squared-error slope {s['one_point_sq_rate_slope']:.3f}, reported), {secs:.0f}s < 600s")


def test_ac7_arratia_two_point(tmp_path_factory, acceptance_log):
    _, s, _ = _run("arratia_coalescence", tmp_path_factory)
    target = coalescence_probability(0.1, 1.0)
    frac, ovp = s["merge_fraction"], s["order_violation_probability"]
    ok = abs(frac - target) <= 0.05 and ovp < 0.05
    _record(acceptance_log, "AC7", ok,
            f"merge fraction {frac:.4f} vs {target:.4f} (+-0.05); order violation P = {ovp:.4f} < 0.05")


def test_ac8_arratia_cluster_count(tmp_path_factory, acceptance_log):
    _, s, _ = _run("arratia_cluster_count", tmp_path_factory)
    tv = s["cluster_count_tv"]
    _record(acceptance_log, "AC8", tv < 0.1,
            f"cluster-count TV = {tv:.4f} < 0.1 (mean clusters {s['mean_clusters']:.3f} "
            f"vs oracle {s['mean_clusters_oracle']:.3f})")


def test_ac9_levy_prokhorov(tmp_path_factory, acceptance_log):
    _, s, secs = _run("lp_unit", tmp_path_factory)
    ok = (s["rho_identity"] == 0.0 and s["rho_shift_0.1_affine_error"] <= 1e-6
          and s["max_bisection_vs_brute_force"] <= 1e-3 and s["max_rho_minus_sup_norm"] <= 1e-9
          and secs < 1.0)
    _record(acceptance_log, "AC9", ok,
            f"rho(f,f)=0, |rho(shift 0.1) - 0.05| = {s['rho_shift_0.1_affine_error']:.1e}, "
            f"max |bisection - brute force| = {s['max_bisection_vs_brute_force']:.1e}, {secs:.2f}s < 1s")


@pytest.mark.parametrize("experiment,overrides", [
    ("one_point_law", {}),
    ("arratia_cluster_count", {"replicas": 500, "n": [512]}),
])
def test_ac10_determinism_across_jobs(tmp_path_factory, acceptance_log, experiment, overrides):
    out = tmp_path_factory.mktemp(f"det_{experiment}")
    reports = []
    for jobs in (1, 2):
        cfg = ExperimentConfig.for_experiment(experiment, output_dir=str(out), **overrides)
        run_experiment(cfg, jobs=jobs)
        reports.append((out / f"{experiment}.json").read_bytes())
    _record(acceptance_log, "AC10", reports[0] == reports[1],
            f"{experiment}: JSON byte-identical for --jobs 1 and 2")

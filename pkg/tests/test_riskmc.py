"""Sampler statistics, risk aggregation, convergence and determinism."""

import dataclasses
import time

import numpy as np
import pytest

from cases_util import three_bus_case
from gridrisk.errors import MonteCarloError
from gridrisk.netmodel import PowerSystemCase
from gridrisk.riskmc import (
    FaultDistributions,
    LoadingModel,
    McConfig,
    SampleRecord,
    convergence_check,
    evaluate_sample,
    fault_probability,
    fit_normal,
    histogram,
    histogram_csv,
    run_monte_carlo,
    sample_fault,
    sample_rng,
    samples_to_csv,
    summary_to_dict,
)

TYPE_WEIGHT = {"LLL": 1.0, "LLG": 0.6, "LL": 0.3, "LG": 0.1}


def analytic_severity(case, fault):
    """Deterministic severity as a function of (line, type, location) only."""
    lines = sorted(b.id for b in case.lines)
    idx = lines.index(fault.line)
    w = TYPE_WEIGHT[fault.fault_type]
    sev_a = (idx % 7) / 7.0 * w
    sev_v = fault.location_pct / 100.0 * w
    sev_f = 0.3 * w
    return sev_a, sev_v, sev_f


def synthetic_evaluator(case, pf, fault, sample_id, dists):
    sev_a, sev_v, sev_f = analytic_severity(case, fault)
    return SampleRecord(
        sample_id=sample_id, line=fault.line, fault_type=fault.fault_type,
        location_pct=fault.location_pct, fct_s=fault.fct,
        sev_a=sev_a, sev_v=sev_v, sev_f=sev_f,
        g_sample=max(sev_a, sev_v, sev_f),
        pr_fault=fault_probability(case, dists, fault),
        termination="completed",
    )


def flaky_evaluator(case, pf, fault, sample_id, dists):
    rec = synthetic_evaluator(case, pf, fault, sample_id, dists)
    if sample_id % 100 == 7:  # 1% failure rate
        return dataclasses.replace(rec, termination="failed", fail_reason="synthetic")
    return rec


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------

def test_sampler_statistics_30000(ieee39):
    dists = FaultDistributions()
    rng = sample_rng(123, 0)
    n = 30000
    t0 = time.perf_counter()
    events = [sample_fault(rng, ieee39, dists) for _ in range(n)]
    elapsed = time.perf_counter() - t0
    counts = {t: 0 for t in ("LLL", "LLG", "LL", "LG")}
    for e in events:
        counts[e.fault_type] += 1
    for t, p in (("LLL", 0.05), ("LLG", 0.10), ("LL", 0.15), ("LG", 0.70)):
        assert abs(counts[t] / n - p) < 0.01, f"{t}: {counts[t] / n}"
    fct = np.array([e.fct for e in events])
    assert abs(fct.mean() - 0.2) < 0.001
    assert abs(fct.std(ddof=1) - 0.005) < 0.0005
    assert fct.min() > 0.0
    assert elapsed < 1.0, f"sampling took {elapsed:.2f} s"


def test_sampler_location_uniform_integer(ieee39):
    rng = sample_rng(5, 0)
    locs = [sample_fault(rng, ieee39, FaultDistributions()).location_pct
            for _ in range(5000)]
    assert min(locs) == 1
    assert max(locs) == 100
    assert all(isinstance(v, int) for v in locs)


def test_sampler_deterministic_per_index(ieee39):
    dists = FaultDistributions()
    a = sample_fault(sample_rng(9, 42), ieee39, dists)
    b = sample_fault(sample_rng(9, 42), ieee39, dists)
    c = sample_fault(sample_rng(9, 43), ieee39, dists)
    assert a == b
    assert a != c


def test_sampler_single_line_case():
    case = three_bus_case()
    single = dataclasses.replace(
        case, branches=(case.branches[0],
                        dataclasses.replace(case.branches[1], is_line=False),
                        dataclasses.replace(case.branches[2], is_line=False)))
    rng = sample_rng(0, 0)
    for _ in range(50):
        assert sample_fault(rng, single, FaultDistributions()).line == 1


def test_fault_probability(ieee39):
    dists = FaultDistributions()
    rng = sample_rng(1, 1)
    ev = sample_fault(rng, ieee39, dists)
    pr = fault_probability(ieee39, dists, ev)
    assert pr == pytest.approx(
        (1 / 34) * (1 / 100) * dict(dists.type_probs)[ev.fault_type]
    )


def test_fct_truncation_guard():
    with pytest.raises(MonteCarloError, match="non-positive"):
        FaultDistributions(fct_mean=0.01, fct_std=0.005).validate()


def test_loading_model_probabilities():
    LoadingModel().validate()
    with pytest.raises(MonteCarloError, match="sum to"):
        LoadingModel(levels=((1.0, 0.7), (1.1, 0.2))).validate()


# ---------------------------------------------------------------------------
# Normal fit
# ---------------------------------------------------------------------------

def test_fit_normal_constant():
    assert fit_normal([0.4] * 10) == (pytest.approx(0.4), pytest.approx(0.0))


def test_fit_normal_two_point():
    mean, std = fit_normal([0.0, 1.0])
    assert mean == pytest.approx(0.5)
    assert std == pytest.approx(np.sqrt(0.5), abs=1e-12)


def test_fit_normal_refits_synthetic_draws():
    rng = np.random.default_rng(7)
    draws = rng.normal(0.36, 0.05, size=30000)
    mean, std = fit_normal(draws)
    assert abs(mean - 0.36) < 0.002
    assert abs(std - 0.05) < 0.002


def test_fit_normal_needs_two_samples():
    with pytest.raises(MonteCarloError, match="at least 2"):
        fit_normal([0.3])


# ---------------------------------------------------------------------------
# Convergence checker
# ---------------------------------------------------------------------------

def test_convergence_constant_history():
    hist = [(1000 * (i + 1), 0.3, 0.2, 0.1) for i in range(10)]
    assert convergence_check(hist, window=5000, threshold=0.005)


def test_convergence_reported_checkpoint_shape():
    hist = [(1000, 0.33, 0.25, 0.25), (5000, 0.35, 0.26, 0.27),
            (30000, 0.36, 0.27, 0.29), (50000, 0.36, 0.27, 0.29)]
    assert convergence_check(hist, window=5000, threshold=0.005)
    assert not convergence_check(hist[:3], window=5000, threshold=0.005)


def test_convergence_drifting_history():
    hist = [(1000 * (i + 1), 0.1 + 0.01 * i, 0.2, 0.1) for i in range(10)]
    assert not convergence_check(hist, window=5000, threshold=0.005)


def test_convergence_needs_history():
    with pytest.raises(MonteCarloError):
        convergence_check([], window=5000, threshold=0.005)
    assert not convergence_check([(1000, 0.3, 0.2, 0.1)], window=5000, threshold=0.005)


# ---------------------------------------------------------------------------
# Monte Carlo driver (synthetic evaluator)
# ---------------------------------------------------------------------------

def mc_config(**over):
    base = dict(n_max=2000, seed=11, check_every=500, conv_window=10**9)
    base.update(over)
    return McConfig(**base)


def test_mc_estimator_matches_enumeration(ieee39):
    cfg = mc_config(n_max=10000, check_every=10000)
    summary, records = run_monte_carlo(ieee39, FaultDistributions(), cfg,
                                       evaluator=synthetic_evaluator)
    assert summary.n_samples == 10000

    # exact enumeration over 34 lines x 100 locations x 4 types
    dists = FaultDistributions()
    lines = sorted(b.id for b in ieee39.lines)
    exact = np.zeros(3)
    for line in lines:
        for loc in range(1, 101):
            for ftype, p in dists.type_probs:
                fake = dataclasses.replace(
                    records[0], line=line, location_pct=loc, fault_type=ftype)
                sev = analytic_severity(ieee39, fake)
                exact += np.array(sev) * (1 / 34) * (1 / 100) * p
    got = np.array([summary.r_am, summary.r_vm, summary.r_fm])
    sev_arr = np.array([[r.sev_a, r.sev_v, r.sev_f] for r in records])
    se = sev_arr.std(axis=0, ddof=1) / np.sqrt(len(records))
    assert np.all(np.abs(got - exact) <= 3 * se), f"{got} vs {exact} (3se={3*se})"


def test_mc_g_is_max_of_means(ieee39):
    summary, _ = run_monte_carlo(ieee39, FaultDistributions(), mc_config(),
                                 evaluator=synthetic_evaluator)
    assert summary.g == max(summary.r_am, summary.r_vm, summary.r_fm)


def test_mc_all_stable_zero_risk(ieee39):
    def zero_eval(case, pf, fault, sample_id, dists):
        rec = synthetic_evaluator(case, pf, fault, sample_id, dists)
        return dataclasses.replace(rec, sev_a=0.0, sev_v=0.0, sev_f=0.0, g_sample=0.0)

    summary, _ = run_monte_carlo(ieee39, FaultDistributions(),
                                 mc_config(n_max=500, check_every=500),
                                 evaluator=zero_eval)
    assert summary.r_am == summary.r_vm == summary.r_fm == summary.g == 0.0


def test_mc_weighted_mode_degenerate_scaling(ieee39):
    # one fault-eligible line and a single fault type: Pr(F) is the constant
    # (1/1)(1/100)(1), so the weighted means are exactly the sampled means / 100
    single = dataclasses.replace(
        ieee39,
        branches=tuple(
            b if not b.is_line or b.id == 1 else dataclasses.replace(b, is_line=False)
            for b in ieee39.branches
        ),
    )
    dists = FaultDistributions(type_probs=(("LG", 1.0),))
    cfg_s = mc_config(n_max=800, check_every=800, risk_mode="sampled")
    cfg_w = mc_config(n_max=800, check_every=800, risk_mode="weighted")
    s_sampled, rec_s = run_monte_carlo(single, dists, cfg_s, evaluator=synthetic_evaluator)
    s_weighted, rec_w = run_monte_carlo(single, dists, cfg_w, evaluator=synthetic_evaluator)
    assert [r.g_sample for r in rec_s] == [r.g_sample for r in rec_w]
    assert s_weighted.r_am == pytest.approx(s_sampled.r_am / 100.0, rel=1e-12)
    assert s_weighted.r_vm == pytest.approx(s_sampled.r_vm / 100.0, rel=1e-12)
    assert s_weighted.r_fm == pytest.approx(s_sampled.r_fm / 100.0, rel=1e-12)


def test_mc_worker_count_invariance(ieee39):
    cfg1 = mc_config(n_max=600, check_every=200, workers=1)
    cfg2 = mc_config(n_max=600, check_every=200, workers=2)
    s1, r1 = run_monte_carlo(ieee39, FaultDistributions(), cfg1,
                             evaluator=synthetic_evaluator)
    s2, r2 = run_monte_carlo(ieee39, FaultDistributions(), cfg2,
                             evaluator=synthetic_evaluator)
    assert samples_to_csv(r1) == samples_to_csv(r2)
    assert summary_to_dict(s1) == summary_to_dict(s2)


def test_mc_failed_samples_excluded_and_counted(ieee39):
    cfg = mc_config(n_max=500, check_every=500, fail_limit_fraction=0.05)
    summary, records = run_monte_carlo(ieee39, FaultDistributions(), cfg,
                                       evaluator=flaky_evaluator)
    n_failed = sum(1 for r in records if r.failed)
    assert n_failed == 5
    assert summary.n_failed == 5
    assert summary.n_samples == 495
    ok = [r for r in records if not r.failed]
    assert summary.r_am == pytest.approx(np.mean([r.sev_a for r in ok]))


def test_mc_failure_rate_limit(ieee39):
    cfg = mc_config(n_max=500, check_every=500)  # default limit 0.1%
    with pytest.raises(MonteCarloError, match="failed"):
        run_monte_carlo(ieee39, FaultDistributions(), cfg, evaluator=flaky_evaluator)


def test_mc_monotone_voltage_risk(ieee39):
    base = mc_config(n_max=12, check_every=12)
    s_hi, _ = run_monte_carlo(ieee39, FaultDistributions(),
                              dataclasses.replace(base, voltage_threshold=0.05))
    s_lo, _ = run_monte_carlo(ieee39, FaultDistributions(),
                              dataclasses.replace(base, voltage_threshold=0.02))
    assert s_lo.r_vm >= s_hi.r_vm


def test_mc_early_stop_on_convergence(ieee39):
    cfg = McConfig(n_max=5000, seed=3, check_every=250, conv_window=500,
                   conv_threshold=0.05)
    summary, records = run_monte_carlo(ieee39, FaultDistributions(), cfg,
                                       evaluator=synthetic_evaluator)
    assert summary.converged
    assert summary.n_samples < 5000


def test_mc_real_evaluator_small_run(ieee39):
    """End-to-end smoke: real simulations, severities finite and recorded."""
    cfg = McConfig(n_max=6, seed=2, check_every=6, conv_window=10**9)
    summary, records = run_monte_carlo(ieee39, FaultDistributions(), cfg)
    assert summary.n_samples == 6
    for r in records:
        assert r.termination in ("completed", "diverged")
        assert r.g_sample == max(r.sev_a, r.sev_v, r.sev_f)
        assert np.isfinite(r.g_sample)


def test_evaluate_sample_snaps_fct_to_grid(ieee39, ieee39_pf, ieee39_state):
    from gridrisk.dynsim import FaultEvent

    fault = FaultEvent(line=1, location_pct=40, fault_type="LG",
                       t_apply=1.0, t_clear=1.0 + 0.2013)
    rec = evaluate_sample(ieee39, ieee39_pf, fault, sample_id=0,
                          init_state=ieee39_state, dt=0.005)
    assert rec.termination in ("completed", "diverged")
    assert rec.fct_s == pytest.approx(0.2013)  # record keeps the raw sample


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def test_samples_csv_columns(ieee39):
    _, records = run_monte_carlo(ieee39, FaultDistributions(),
                                 mc_config(n_max=50, check_every=50),
                                 evaluator=synthetic_evaluator)
    csv = samples_to_csv(records)
    lines = csv.strip().split("\n")
    assert lines[0] == ("sample_id,line,type,location_pct,fct_s,"
                        "sev_a,sev_v,sev_f,g_sample,termination")
    assert len(lines) == 51


def test_histogram_export(ieee39):
    _, records = run_monte_carlo(ieee39, FaultDistributions(),
                                 mc_config(n_max=200, check_every=200),
                                 evaluator=synthetic_evaluator)
    centers, counts = histogram(records, bins=10)
    assert len(centers) == 10
    assert counts.sum() == 200
    text = histogram_csv(records, bins=10)
    assert text.startswith("bin_center,count\n")
    assert len(text.strip().split("\n")) == 11


def test_summary_dict_fields(ieee39):
    summary, _ = run_monte_carlo(ieee39, FaultDistributions(),
                                 mc_config(n_max=100, check_every=50),
                                 evaluator=synthetic_evaluator)
    d = summary_to_dict(summary)
    for key in ("n_samples", "n_failed", "r_am", "r_vm", "r_fm", "g",
                "normal_fit", "converged", "seed", "risk_mode", "history"):
        assert key in d
    assert d["g"] == max(d["r_am"], d["r_vm"], d["r_fm"])
    assert len(d["history"]) == 2


def test_evaluate_sample_diverged_caps(ieee39, ieee39_pf, ieee39_state):
    """A diverged sample carries the pinned angle severity and a large index."""
    from gridrisk.dynsim import FaultEvent

    line = next(b for b in ieee39.lines if {b.from_bus, b.to_bus} == {16, 17})
    fault = FaultEvent(line=line.id, location_pct=50, fault_type="LLL",
                       t_apply=1.0, t_clear=9.0, trip_line=False)
    rec = evaluate_sample(ieee39, ieee39_pf, fault, init_state=ieee39_state)
    assert rec.termination == "diverged"
    assert rec.sev_a == 1.0
    assert rec.g_sample >= 1.0

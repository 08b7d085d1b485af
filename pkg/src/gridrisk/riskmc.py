"""Monte Carlo risk engine.

Samples fault scenarios (type from the discrete distribution, line and location
uniform, clearing time Normal), simulates each, reduces the three severities
into running risk means and the global index G = max of the means.

Determinism contract: each sample's random stream derives from (master seed,
sample index), and aggregation runs in sample-index order, so identical
(case, seed, config) produce byte-identical records and summaries regardless
of worker count.
"""

from __future__ import annotations

import concurrent.futures
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridRiskError, MonteCarloError
from .netmodel import PowerSystemCase
from .powerflow import PowerFlowSolution, solve_power_flow
from .dynsim import DynamicState, FaultEvent, init_dynamics, run_simulation
from .metrics import compute_tsi, frequency_severity, voltage_severity

RISK_MODES = ("sampled", "weighted")
TERMINATION_FAILED = "failed"

DEFAULT_TYPE_PROBS = {"LLL": 0.05, "LLG": 0.10, "LL": 0.15, "LG": 0.70}
FCT_MEAN_S = 0.2
FCT_STD_S = 0.005
FCT_TRUNC_SIGMA = 4.0
T_APPLY_S = 1.0


@dataclass(frozen=True)
class LoadingModel:
    """Conditional loading levels; the study runs at peak load with probability 1."""

    levels: tuple[tuple[float, float], ...] = ((1.0, 1.0),)  # (scale, probability)

    def validate(self) -> None:
        total = sum(p for _, p in self.levels)
        if abs(total - 1.0) > 1e-9:
            raise MonteCarloError(f"loading-level probabilities sum to {total}, not 1")


@dataclass(frozen=True)
class FaultDistributions:
    """Sampling distributions for one contingency draw."""

    type_probs: tuple[tuple[str, float], ...] = tuple(DEFAULT_TYPE_PROBS.items())
    fct_mean: float = FCT_MEAN_S
    fct_std: float = FCT_STD_S
    fct_trunc_sigma: float = FCT_TRUNC_SIGMA
    t_apply: float = T_APPLY_S
    trip_line: bool = True

    def validate(self) -> None:
        total = sum(p for _, p in self.type_probs)
        if abs(total - 1.0) > 1e-9:
            raise MonteCarloError(f"fault-type probabilities sum to {total}, not 1")
        if self.fct_mean - self.fct_trunc_sigma * self.fct_std <= 0.0:
            raise MonteCarloError("FCT distribution admits non-positive clearing times")

    def type_probability(self, fault_type: str) -> float:
        for name, p in self.type_probs:
            if name == fault_type:
                return p
        raise MonteCarloError(f"unknown fault type {fault_type!r}")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: int
    line: int
    fault_type: str
    location_pct: int
    fct_s: float
    sev_a: float
    sev_v: float
    sev_f: float
    g_sample: float
    pr_fault: float
    termination: str           # completed | diverged | failed
    fail_reason: str | None = None

    @property
    def failed(self) -> bool:
        return self.termination == TERMINATION_FAILED


@dataclass(frozen=True)
class RiskSummary:
    n_samples: int             # successful samples entering the means
    n_failed: int
    r_am: float
    r_vm: float
    r_fm: float
    g: float
    normal_mean: float
    normal_std: float
    converged: bool
    history: tuple[tuple[int, float, float, float], ...]
    seed: int
    risk_mode: str


@dataclass(frozen=True)
class McConfig:
    n_max: int = 30000
    seed: int = 0
    risk_mode: str = "sampled"
    conv_window: int = 5000
    conv_threshold: float = 0.005
    check_every: int = 1000
    workers: int = 1
    dt: float = 0.005
    t_end: float = 10.0
    fail_limit_fraction: float = 0.001
    voltage_threshold: float = 0.05
    frequency_threshold: float = 0.5
    loading: LoadingModel = LoadingModel()

    def validate(self) -> None:
        if self.risk_mode not in RISK_MODES:
            raise MonteCarloError(f"unknown risk mode {self.risk_mode!r}")
        if self.n_max < 1:
            raise MonteCarloError("n_max must be >= 1")
        self.loading.validate()


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    """Stream for one sample, a pure function of (master seed, sample index)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(sample_id))))


def sample_fault(
    rng: np.random.Generator, case: PowerSystemCase, dists: FaultDistributions
) -> FaultEvent:
    """Draw one contingency: line, location, type and clearing time.

    Draw order is fixed (line, location, type, FCT) so a given stream state
    always yields the same event. The FCT Normal is truncated at +-4 sigma by
    redrawing.
    """
    lines = sorted(case.lines, key=lambda b: b.id)
    if not lines:
        raise MonteCarloError("case has no fault-eligible lines")
    line = lines[int(rng.integers(0, len(lines)))]
    location = int(rng.integers(1, 101))
    u = float(rng.random())
    acc = 0.0
    ftype = dists.type_probs[-1][0]
    for name, p in dists.type_probs:
        acc += p
        if u < acc:
            ftype = name
            break
    lo = dists.fct_mean - dists.fct_trunc_sigma * dists.fct_std
    hi = dists.fct_mean + dists.fct_trunc_sigma * dists.fct_std
    while True:
        fct = float(rng.normal(dists.fct_mean, dists.fct_std))
        if lo <= fct <= hi:
            break
    return FaultEvent(
        line=line.id, location_pct=location, fault_type=ftype,
        t_apply=dists.t_apply, t_clear=dists.t_apply + fct,
        trip_line=dists.trip_line,
    )


def fault_probability(case: PowerSystemCase, dists: FaultDistributions,
                      fault: FaultEvent) -> float:
    """Probability of the sampled contingency: uniform line x uniform location
    x type probability."""
    return (1.0 / len(case.lines)) * (1.0 / 100.0) * dists.type_probability(fault.fault_type)


# ---------------------------------------------------------------------------
# Per-sample evaluation
# ---------------------------------------------------------------------------

def evaluate_sample(
    case: PowerSystemCase,
    pf: PowerFlowSolution,
    fault: FaultEvent,
    sample_id: int = 0,
    dists: FaultDistributions | None = None,
    init_state: DynamicState | None = None,
    dt: float = 0.005,
    t_end: float = 10.0,
    voltage_threshold: float = 0.05,
    frequency_threshold: float = 0.5,
) -> SampleRecord:
    """Simulate one contingency and reduce it to severities.

    The sampled clearing time is snapped to the nearest grid point (at least one
    step) for the simulation; the record keeps the raw sample. Setup failures
    mark the record failed with the reason; divergence is a result, not a failure.
    """
    dists = dists or FaultDistributions()
    pr = fault_probability(case, dists, fault)
    n_steps = max(1, round(fault.fct / dt))
    snapped = replace(fault, t_clear=fault.t_apply + n_steps * dt)
    try:
        traj = run_simulation(case, pf, snapped, t_end=t_end, dt=dt,
                              init_state=init_state)
        am = compute_tsi(traj)
        vm = voltage_severity(traj, threshold=voltage_threshold)
        fm = frequency_severity(traj, threshold=frequency_threshold)
    except GridRiskError as exc:
        return SampleRecord(
            sample_id=sample_id, line=fault.line, fault_type=fault.fault_type,
            location_pct=fault.location_pct, fct_s=fault.fct,
            sev_a=0.0, sev_v=0.0, sev_f=0.0, g_sample=0.0, pr_fault=pr,
            termination=TERMINATION_FAILED, fail_reason=str(exc),
        )
    g = max(am.sev_a, vm.sev_v, fm.sev_f)
    return SampleRecord(
        sample_id=sample_id, line=fault.line, fault_type=fault.fault_type,
        location_pct=fault.location_pct, fct_s=fault.fct,
        sev_a=am.sev_a, sev_v=vm.sev_v, sev_f=fm.sev_f, g_sample=g, pr_fault=pr,
        termination=traj.termination,
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def fit_normal(values) -> tuple[float, float]:
    """Sample mean and unbiased standard deviation of the per-sample index."""
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        raise MonteCarloError(f"normal fit needs at least 2 samples, got {v.size}")
    return float(v.mean()), float(v.std(ddof=1))


def convergence_check(
    history, window: int = 5000, threshold: float = 0.005
) -> bool:
    """Whether the running means have stopped moving.

    ``history`` is a sequence of (n, r_am, r_vm, r_fm) checkpoints. Converged
    means every consecutive-checkpoint change landing inside the trailing
    ``window`` samples stays below ``threshold`` for all three means (and at
    least one such change exists).
    """
    hist = list(history)
    if not hist:
        raise MonteCarloError("convergence check needs a nonempty history")
    if len(hist) < 2:
        return False
    n_latest = hist[-1][0]
    checked = 0
    for prev, cur in zip(hist, hist[1:]):
        if cur[0] <= n_latest - window:
            continue
        checked += 1
        for j in (1, 2, 3):
            if abs(cur[j] - prev[j]) >= threshold:
                return False
    return checked > 0


# ---------------------------------------------------------------------------
# Monte Carlo driver
# ---------------------------------------------------------------------------

_WORKER_CTX: dict = {}


def _init_worker(ctx):
    _WORKER_CTX.update(ctx)


def _eval_index(i: int) -> SampleRecord:
    c = _WORKER_CTX
    rng = sample_rng(c["seed"], i)
    fault = sample_fault(rng, c["case"], c["dists"])
    evaluator = c["evaluator"]
    if evaluator is not None:
        return evaluator(c["case"], c["pf"], fault, i, c["dists"])
    return evaluate_sample(
        c["case"], c["pf"], fault, sample_id=i, dists=c["dists"],
        init_state=c["init_state"], dt=c["dt"], t_end=c["t_end"],
        voltage_threshold=c["vth"], frequency_threshold=c["fth"],
    )


def run_monte_carlo(
    case: PowerSystemCase,
    dists: FaultDistributions | None = None,
    config: McConfig | None = None,
    evaluator=None,
    progress=None,
) -> tuple[RiskSummary, list[SampleRecord]]:
    """Run the sampling loop until convergence or ``n_max`` samples.

    In ``sampled`` mode (default) the risk means are plain averages of the
    severities: the draw itself carries the distributional weighting, which is
    what reproduces the reported index magnitudes. ``weighted`` mode multiplies
    each severity by the sample's fault probability before averaging, the
    literal composition of the printed risk sums.

    ``evaluator`` substitutes the simulation step (same signature as the default
    path evaluates: case, pf, fault, sample_id, dists -> SampleRecord); used for
    synthetic-severity studies and estimator tests.
    """
    dists = dists or FaultDistributions()
    config = config or McConfig()
    dists.validate()
    config.validate()

    pf = solve_power_flow(case, tol=1e-10, max_iter=40)
    init_state = init_dynamics(case, pf) if evaluator is None else None

    ctx = {
        "case": case, "pf": pf, "dists": dists, "seed": config.seed,
        "init_state": init_state, "dt": config.dt, "t_end": config.t_end,
        "vth": config.voltage_threshold, "fth": config.frequency_threshold,
        "evaluator": evaluator,
    }

    records: list[SampleRecord] = []
    history: list[tuple[int, float, float, float]] = []
    converged = False

    def running_means():
        ok = [r for r in records if not r.failed]
        if not ok:
            return 0.0, 0.0, 0.0
        if config.risk_mode == "weighted":
            w = np.array([r.pr_fault for r in ok])
            return (
                float(np.mean(w * [r.sev_a for r in ok])),
                float(np.mean(w * [r.sev_v for r in ok])),
                float(np.mean(w * [r.sev_f for r in ok])),
            )
        return (
            float(np.mean([r.sev_a for r in ok])),
            float(np.mean([r.sev_v for r in ok])),
            float(np.mean([r.sev_f for r in ok])),
        )

    pool = None
    try:
        if config.workers > 1:
            pool = concurrent.futures.ProcessPoolExecutor(
                max_workers=config.workers,
                mp_context=multiprocessing.get_context("fork"),
                initializer=_init_worker, initargs=(ctx,),
            )
        else:
            _init_worker(ctx)

        n_done = 0
        while n_done < config.n_max and not converged:
            block = range(n_done, min(n_done + config.check_every, config.n_max))
            if pool is not None:
                block_records = list(pool.map(_eval_index, block, chunksize=8))
            else:
                block_records = [_eval_index(i) for i in block]
            records.extend(block_records)
            n_done = len(records)
            r_am, r_vm, r_fm = running_means()
            history.append((n_done, r_am, r_vm, r_fm))
            if progress is not None:
                progress(n_done, r_am, r_vm, r_fm)
            if n_done >= config.conv_window:
                converged = convergence_check(
                    history, window=config.conv_window, threshold=config.conv_threshold
                )
    finally:
        if pool is not None:
            pool.shutdown()
        _WORKER_CTX.clear()

    ok = [r for r in records if not r.failed]
    n_failed = len(records) - len(ok)
    if not ok:
        raise MonteCarloError("no successful samples")
    if n_failed > config.fail_limit_fraction * len(records):
        reasons = {r.fail_reason for r in records if r.failed}
        raise MonteCarloError(
            f"{n_failed}/{len(records)} samples failed "
            f"(limit {config.fail_limit_fraction:.2%}); reasons: {sorted(reasons)}"
        )

    r_am, r_vm, r_fm = running_means()
    mean, std = fit_normal([r.g_sample for r in ok]) if len(ok) >= 2 else (ok[0].g_sample, 0.0)
    summary = RiskSummary(
        n_samples=len(ok), n_failed=n_failed,
        r_am=r_am, r_vm=r_vm, r_fm=r_fm, g=max(r_am, r_vm, r_fm),
        normal_mean=mean, normal_std=std,
        converged=converged, history=tuple(history),
        seed=config.seed, risk_mode=config.risk_mode,
    )
    return summary, records


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

SAMPLE_CSV_HEADER = "sample_id,line,type,location_pct,fct_s,sev_a,sev_v,sev_f,g_sample,termination"


def samples_to_csv(records) -> str:
    lines = [SAMPLE_CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.sample_id},{r.line},{r.fault_type},{r.location_pct},"
            f"{r.fct_s:.10g},{r.sev_a:.10g},{r.sev_v:.10g},{r.sev_f:.10g},"
            f"{r.g_sample:.10g},{r.termination}"
        )
    return "\n".join(lines) + "\n"


def summary_to_dict(summary: RiskSummary) -> dict:
    return {
        "n_samples": summary.n_samples,
        "n_failed": summary.n_failed,
        "r_am": summary.r_am,
        "r_vm": summary.r_vm,
        "r_fm": summary.r_fm,
        "g": summary.g,
        "normal_fit": {"mean": summary.normal_mean, "std": summary.normal_std},
        "converged": summary.converged,
        "seed": summary.seed,
        "risk_mode": summary.risk_mode,
        "history": [list(h) for h in summary.history],
    }


def histogram(records, bins: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """(bin_center, count) pairs over the per-sample global index."""
    g = np.array([r.g_sample for r in records if not r.failed])
    counts, edges = np.histogram(g, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts


def histogram_csv(records, bins: int = 40) -> str:
    centers, counts = histogram(records, bins=bins)
    lines = ["bin_center,count"]
    for c, n in zip(centers, counts):
        lines.append(f"{c:.10g},{int(n)}")
    return "\n".join(lines) + "\n"

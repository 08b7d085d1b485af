"""Command-line entry point.

Subcommands: ``powerflow``, ``simulate``, ``mc``, ``sweep``, ``validate-case``.
Defaults reproduce the study's experiment (fault at 1 s, clearing time
Normal(0.2 s, 0.005 s), 10 s horizon, 30,000 samples) with no flags beyond the
case path. Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 unconverged Monte Carlo.

Every output file is written atomically (temp file + rename) and each run
directory carries a manifest naming the config hash, seed and produced files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .errors import GridRiskError
from .netmodel import load_case, parse_case, validate_case
from .powerflow import solve_power_flow, solution_table, verify_dispatch
from .dynsim import FaultEvent, init_dynamics, run_simulation
from .metrics import compute_tsi, frequency_severity, voltage_severity
from .riskmc import (
    FaultDistributions,
    McConfig,
    histogram_csv,
    run_monte_carlo,
    samples_to_csv,
    summary_to_dict,
)
from .scenario import (
    PENETRATION_LEVELS,
    ScenarioSpec,
    apply_wind_penetration,
    compute_penetration,
    scale_generation,
    scale_load,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_UNCONVERGED = 3

DEFAULTS = {
    "tol": 1e-6,
    "max_iter": 20,
    "dt": 0.005,
    "t_end": 10.0,
    "t_apply": 1.0,
    "fct_mean": 0.2,
    "fct_std": 0.005,
    "n_max": 30000,
    "seed": 0,
    "risk_mode": "sampled",
    "workers": 1,
    "conv_window": 5000,
    "conv_threshold": 0.005,
    "check_every": 1000,
    "voltage_threshold": 0.05,
    "frequency_threshold": 0.5,
    "bins": 40,
}


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(outdir: str, settings: dict, files: list[str]) -> None:
    blob = json.dumps(settings, sort_keys=True).encode()
    manifest = {
        "tool": f"gridrisk {__version__}",
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "settings": settings,
        "files": sorted(files),
    }
    _atomic_write(os.path.join(outdir, "manifest.json"),
                  json.dumps(manifest, indent=1) + "\n")


def _merge_config(args, keys) -> dict:
    """Defaults, overridden by --config file entries, overridden by flags."""
    cfg = {k: DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        for k in keys:
            if k in file_cfg:
                cfg[k] = file_cfg[k]
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate_case(args) -> int:
    case = parse_case(args.case)
    rep = validate_case(case)
    for w in rep.warnings:
        print(f"warning: {w}")
    if not rep.ok:
        for e in rep.errors:
            print(f"error: {e}")
        return EXIT_USAGE
    print(
        f"case {case.name!r} is valid: {case.n_bus} buses, "
        f"{len(case.lines)} lines, {len(case.branches) - len(case.lines)} transformers, "
        f"{len(case.generators)} generators, {case.total_load_mw():.1f} MW load"
    )
    return EXIT_OK


def cmd_powerflow(args) -> int:
    cfg = _merge_config(args, ["tol", "max_iter"])
    case = load_case(args.case)
    sol = solve_power_flow(case, tol=cfg["tol"], max_iter=int(cfg["max_iter"]))
    table = solution_table(case, sol)
    out = args.out or "powerflow.csv"
    _atomic_write(out, table)
    print(f"converged in {sol.iterations} iterations, "
          f"max mismatch {sol.max_mismatch:.3e} pu")
    print(verify_dispatch(case, sol).format())
    print(f"solution table written to {out}")
    return EXIT_OK


def _apply_scenario(case, args):
    # config-file scenarios apply first; flags stack on top
    if getattr(args, "config", None):
        with open(args.config) as fh:
            entries = json.load(fh).get("scenario")
        if entries:
            if isinstance(entries, dict):
                entries = [entries]
            for d in entries:
                case = ScenarioSpec(
                    kind=d["kind"], replaced=tuple(d.get("replaced", ())),
                    penetration_pct=d.get("penetration_pct"),
                    factor=d.get("factor"),
                ).apply(case)
    if getattr(args, "penetration", None) is not None:
        lvl = int(args.penetration)
        if lvl not in PENETRATION_LEVELS:
            raise GridRiskError(
                f"unknown penetration level {lvl}; known: {sorted(PENETRATION_LEVELS)}"
            )
        case = apply_wind_penetration(case, PENETRATION_LEVELS[lvl])
    if getattr(args, "replace", None):
        case = apply_wind_penetration(case, args.replace.split(","))
    if getattr(args, "generation_scale", None) is not None:
        case = scale_generation(case, args.generation_scale)
    if getattr(args, "load_scale", None) is not None:
        case = scale_load(case, args.load_scale)
    return case


def cmd_simulate(args) -> int:
    cfg = _merge_config(args, ["dt", "t_end", "t_apply"])
    case = _apply_scenario(load_case(args.case), args)
    pf = solve_power_flow(case, tol=1e-10, max_iter=40)
    fault = None
    if args.line is not None:
        fct = args.fct if args.fct is not None else DEFAULTS["fct_mean"]
        fault = FaultEvent(
            line=args.line, location_pct=args.location, fault_type=args.fault_type,
            t_apply=cfg["t_apply"], t_clear=cfg["t_apply"] + fct,
            trip_line=not args.no_trip,
        )
    traj = run_simulation(case, pf, fault, t_end=cfg["t_end"], dt=cfg["dt"])
    out = args.out or "trajectory.csv"
    _atomic_write(out, traj.to_table())

    am = compute_tsi(traj)
    vm = voltage_severity(traj)
    fm = frequency_severity(traj)
    g = max(am.sev_a, vm.sev_v, fm.sev_f)
    print(f"termination      : {traj.termination}"
          + (f" ({traj.diverged_reason} at t={traj.diverged_at:.3f} s)" if traj.diverged else ""))
    print(f"delta_max        : {am.delta_max_deg:.2f} deg")
    print(f"tsi              : {am.tsi:.4f}")
    print(f"sev_angle        : {am.sev_a:.4f}")
    print(f"sev_voltage      : {vm.sev_v:.4f}")
    print(f"sev_frequency    : {fm.sev_f:.4f}")
    print(f"g_sample         : {g:.4f}")
    print(f"trajectory written to {out}")
    return EXIT_OK


def _mc_config(cfg, workers=None) -> McConfig:
    return McConfig(
        n_max=int(cfg["n_max"]), seed=int(cfg["seed"]), risk_mode=cfg["risk_mode"],
        conv_window=int(cfg["conv_window"]), conv_threshold=cfg["conv_threshold"],
        check_every=int(cfg["check_every"]),
        workers=int(workers if workers is not None else cfg["workers"]),
        dt=cfg["dt"], t_end=cfg["t_end"],
        voltage_threshold=cfg["voltage_threshold"],
        frequency_threshold=cfg["frequency_threshold"],
    )


def _mc_keys():
    return ["n_max", "seed", "risk_mode", "workers", "conv_window", "conv_threshold",
            "check_every", "dt", "t_end", "t_apply", "fct_mean", "fct_std",
            "voltage_threshold", "frequency_threshold", "bins"]


def _distributions(cfg) -> FaultDistributions:
    return FaultDistributions(
        fct_mean=cfg["fct_mean"], fct_std=cfg["fct_std"], t_apply=cfg["t_apply"],
    )


def cmd_mc(args) -> int:
    cfg = _merge_config(args, _mc_keys())
    case = _apply_scenario(load_case(args.case), args)
    outdir = args.outdir or "mc-run"
    os.makedirs(outdir, exist_ok=True)

    def progress(n, r_am, r_vm, r_fm):
        print(f"  n={n}: R_AM={r_am:.4f} R_VM={r_vm:.4f} R_FM={r_fm:.4f}")

    summary, records = run_monte_carlo(
        case, _distributions(cfg), _mc_config(cfg), progress=progress if args.verbose else None,
    )
    files = []
    for name, text in [
        ("samples.csv", samples_to_csv(records)),
        ("summary.json", json.dumps(summary_to_dict(summary), indent=1) + "\n"),
        ("histogram.csv", histogram_csv(records, bins=int(cfg["bins"]))),
    ]:
        _atomic_write(os.path.join(outdir, name), text)
        files.append(name)
    if args.png:
        files.append(_histogram_png(records, outdir, int(cfg["bins"])))
    _write_manifest(outdir, cfg | {"case": os.path.abspath(args.case)}, files)

    print(f"samples          : {summary.n_samples} ({summary.n_failed} failed)")
    print(f"R_AM             : {summary.r_am:.4f}")
    print(f"R_VM             : {summary.r_vm:.4f}")
    print(f"R_FM             : {summary.r_fm:.4f}")
    print(f"G                : {summary.g:.4f}")
    print(f"normal fit       : mean {summary.normal_mean:.4f}, std {summary.normal_std:.4f}")
    print(f"converged        : {summary.converged}")
    print(f"outputs in {outdir}/")
    return EXIT_OK if summary.converged else EXIT_UNCONVERGED


def _histogram_png(records, outdir: str, bins: int) -> str:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    g = [r.g_sample for r in records if not r.failed]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(g, bins=bins)
    ax.set_xlabel("per-sample global index")
    ax.set_ylabel("count")
    fig.tight_layout()
    path = os.path.join(outdir, "histogram.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return "histogram.png"


def cmd_sweep(args) -> int:
    cfg = _merge_config(args, _mc_keys())
    base = load_case(args.case)
    points = [float(p) for p in args.points.split(",")]
    outdir = args.outdir or "sweep-run"
    os.makedirs(outdir, exist_ok=True)

    rows = ["point,g,r_am,r_vm,r_fm,n_samples"]
    for p in points:
        if args.axis == "penetration":
            lvl = int(p)
            if lvl not in PENETRATION_LEVELS:
                raise GridRiskError(
                    f"unknown penetration level {lvl}; known: {sorted(PENETRATION_LEVELS)}"
                )
            case = apply_wind_penetration(base, PENETRATION_LEVELS[lvl])
            label = f"{compute_penetration(case):.2f}"
        elif args.axis == "generation":
            case = scale_generation(base, p)
            label = f"{p:g}"
        else:
            case = scale_load(base, p)
            label = f"{p:g}"
        summary, _ = run_monte_carlo(case, _distributions(cfg), _mc_config(cfg))
        rows.append(
            f"{label},{summary.g:.10g},{summary.r_am:.10g},"
            f"{summary.r_vm:.10g},{summary.r_fm:.10g},{summary.n_samples}"
        )
        print(f"  {args.axis}={label}: G={summary.g:.4f}")
    curve = "\n".join(rows) + "\n"
    _atomic_write(os.path.join(outdir, "curve.csv"), curve)
    _write_manifest(outdir, cfg | {"case": os.path.abspath(args.case),
                                   "axis": args.axis, "points": points}, ["curve.csv"])
    print(f"curve written to {outdir}/curve.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_scenario_flags(p):
    p.add_argument("--penetration", type=int,
                   help="wind penetration tier (replacement set from the study)")
    p.add_argument("--replace", help="comma-separated generator names to convert to DFIG")
    p.add_argument("--generation-scale", dest="generation_scale", type=float)
    p.add_argument("--load-scale", dest="load_scale", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gridrisk",
        description="Probabilistic transient-stability risk assessment",
    )
    ap.add_argument("--version", action="version", version=f"gridrisk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-case", help="parse and validate a case file")
    p.add_argument("case")
    p.set_defaults(func=cmd_validate_case)

    p = sub.add_parser("powerflow", help="solve the AC power flow")
    p.add_argument("case")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_powerflow)

    p = sub.add_parser("simulate", help="run one deterministic simulation")
    p.add_argument("case")
    p.add_argument("--line", type=int, help="faulted line branch id (omit for no fault)")
    p.add_argument("--location", type=int, default=50, help="fault location percent 1..100")
    p.add_argument("--fault-type", dest="fault_type", default="LLL",
                   choices=["LLL", "LLG", "LL", "LG"])
    p.add_argument("--fct", type=float, help="fault clearing time, s")
    p.add_argument("--no-trip", dest="no_trip", action="store_true",
                   help="clear the fault without tripping the line")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--t-apply", dest="t_apply", type=float)
    p.add_argument("--config")
    p.add_argument("--out")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="run the Monte Carlo risk assessment")
    p.add_argument("case")
    for flag, typ in [("--n-max", int), ("--seed", int), ("--workers", int),
                      ("--conv-window", int), ("--conv-threshold", float),
                      ("--check-every", int), ("--dt", float), ("--t-end", float),
                      ("--t-apply", float), ("--fct-mean", float), ("--fct-std", float),
                      ("--voltage-threshold", float), ("--frequency-threshold", float),
                      ("--bins", int)]:
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    p.add_argument("--risk-mode", dest="risk_mode", choices=["sampled", "weighted"])
    p.add_argument("--config")
    p.add_argument("--outdir")
    p.add_argument("--png", action="store_true", help="also write a histogram image")
    p.add_argument("--verbose", action="store_true")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("sweep", help="run one MC per scenario point and emit the curve")
    p.add_argument("case")
    p.add_argument("--axis", required=True, choices=["penetration", "generation", "load"])
    p.add_argument("--points", required=True, help="comma-separated axis points")
    for flag, typ in [("--n-max", int), ("--seed", int), ("--workers", int),
                      ("--conv-window", int), ("--conv-threshold", float),
                      ("--check-every", int), ("--dt", float), ("--t-end", float),
                      ("--t-apply", float), ("--fct-mean", float), ("--fct-std", float),
                      ("--voltage-threshold", float), ("--frequency-threshold", float),
                      ("--bins", int)]:
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    p.add_argument("--risk-mode", dest="risk_mode", choices=["sampled", "weighted"])
    p.add_argument("--config")
    p.add_argument("--outdir")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GridRiskError as exc:
        kind = type(exc).__name__
        print(f"error ({kind}): {exc}", file=sys.stderr)
        from .errors import CaseFormatError, CaseValidationError, MonteCarloError, ScenarioError
        if isinstance(exc, (CaseFormatError, CaseValidationError, ScenarioError)):
            return EXIT_USAGE
        return EXIT_NUMERICAL
    except KeyboardInterrupt:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

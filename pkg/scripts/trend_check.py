"""Desk-scale trend validation: G across penetration, generation and load sweeps."""

import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from gridrisk.netmodel import load_case
from gridrisk.riskmc import FaultDistributions, McConfig, run_monte_carlo
from gridrisk.scenario import (
    PENETRATION_LEVELS,
    apply_wind_penetration,
    scale_generation,
    scale_load,
)

N = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
SEED = int(sys.argv[2]) if len(sys.argv) > 2 else 2024

case = load_case(os.path.join(os.path.dirname(__file__), "..", "cases", "ieee39.json"))
cfg = McConfig(n_max=N, seed=SEED, check_every=N, conv_window=10**9)
dists = FaultDistributions()

results = {}
for label, factory in [
    ("pen0", lambda: case),
    ("pen25", lambda: apply_wind_penetration(case, PENETRATION_LEVELS[25])),
    ("pen50", lambda: apply_wind_penetration(case, PENETRATION_LEVELS[50])),
    ("pen80", lambda: apply_wind_penetration(case, PENETRATION_LEVELS[80])),
    ("gen1.0", lambda: case),
    ("gen1.1", lambda: scale_generation(case, 1.1)),
    ("gen1.2", lambda: scale_generation(case, 1.2)),
    ("load1.0", lambda: case),
    ("load1.1", lambda: scale_load(case, 1.1)),
    ("load1.15", lambda: scale_load(case, 1.15)),
]:
    t0 = time.time()
    summary, records = run_monte_carlo(factory(), dists, cfg)
    div = sum(1 for r in records if r.termination == "diverged")
    results[label] = dict(g=summary.g, r_am=summary.r_am, r_vm=summary.r_vm,
                          r_fm=summary.r_fm, diverged=div, secs=round(time.time() - t0, 1))
    print(f"{label:9s} G={summary.g:8.4f} am={summary.r_am:.4f} vm={summary.r_vm:.4f} "
          f"fm={summary.r_fm:.4f} div={div}/{N} [{results[label]['secs']}s]", flush=True)

print(json.dumps(results, indent=1))
g = {k: v["g"] for k, v in results.items()}
print("penetration strictly decreasing:", g["pen0"] > g["pen25"] > g["pen50"] > g["pen80"])
print("generation non-increasing:", g["gen1.0"] >= g["gen1.1"] >= g["gen1.2"])
print("load non-decreasing:", g["load1.0"] <= g["load1.1"] <= g["load1.15"])

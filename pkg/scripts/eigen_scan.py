"""Small-signal eigenanalysis of a case at its initialized operating point.

Development tool: finite-difference Jacobian of the full machine state vector
with the algebraic network eliminated at each evaluation.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from gridrisk.netmodel import load_case, case_to_dict, case_from_dict, build_ybus
from gridrisk.powerflow import solve_power_flow
from gridrisk.dynsim import init_dynamics
from gridrisk.dynsim.machines import (
    sg_currents, sg_derivatives, dfig_derivatives, N_SG_STATE, N_DFIG_STATE,
)
from gridrisk.scenario import apply_wind_penetration, PENETRATION_LEVELS

SG_STATES = ["delta", "omega", "eqp", "edp", "eqpp", "edpp", "gov1", "gov2",
             "vm", "vr", "efd", "xf", "pssw", "pss1", "pss2"]
DF_STATES = ["ed", "eq", "wr", "wt", "thtw", "xid", "xiq"]


def build_variant(base_doc, sg_over=None, dfig_over=None):
    doc = json.loads(json.dumps(base_doc))
    for g in doc["generators"]:
        for k, v in (sg_over or {}).items():
            blk, key = k.split(".")
            g[blk][key] = v
    for k, v in (dfig_over or {}).items():
        doc["dfig_template"][k] = v
    return case_from_dict(doc)


def linearize(c):
    pf = solve_power_flow(c, tol=1e-12, max_iter=40)
    st = init_dynamics(c, pf)
    model = st.model
    y = build_ybus(c, loads_as_shunts=True, pf_voltages=pf.v_mag).toarray()
    for k in range(model.sg_par.shape[0]):
        y[model.sg_bus[k], model.sg_bus[k]] += model.sg_ynorton[k]
    for k in range(model.dfig_par.shape[0]):
        y[model.dfig_bus[k], model.dfig_bus[k]] += model.dfig_ynorton[k]
    yinv = np.linalg.inv(y)
    n_sg = st.sg_x.shape[0]
    n_df = st.dfig_x.shape[0]
    nz = n_sg * N_SG_STATE + n_df * N_DFIG_STATE

    def f(z, v_guess):
        sg_x = z[:n_sg * N_SG_STATE].reshape(n_sg, N_SG_STATE)
        df_x = z[n_sg * N_SG_STATE:].reshape(n_df, N_DFIG_STATE)
        v = v_guess.copy()
        for _ in range(100):
            inj = np.zeros(len(v), dtype=complex)
            _, _, _, _, _, i_net = sg_currents(sg_x, model.sg_par, v[model.sg_bus])
            np.add.at(inj, model.sg_bus, i_net + model.sg_ynorton * v[model.sg_bus])
            if n_df:
                _, i_net_df, _, _ = dfig_derivatives(
                    df_x, model.dfig_par, v[model.dfig_bus], st.crowbar, model.omega_b)
                np.add.at(inj, model.dfig_bus, i_net_df + model.dfig_ynorton * v[model.dfig_bus])
            v_new = yinv @ inj
            if np.abs(v_new - v).max() < 1e-13:
                v = v_new
                break
            v = v_new
        i_d, i_q, _, _, vt, _ = sg_currents(sg_x, model.sg_par, v[model.sg_bus])
        out = [sg_derivatives(sg_x, model.sg_par, i_d, i_q, vt, model.omega_b).ravel()]
        if n_df:
            dxd, _, _, _ = dfig_derivatives(
                df_x, model.dfig_par, v[model.dfig_bus], st.crowbar, model.omega_b)
            out.append(dxd.ravel())
        return np.concatenate(out), v

    z0 = np.concatenate([st.sg_x.ravel(), st.dfig_x.ravel()])
    _, v0 = f(z0, st.v_bus)
    J = np.zeros((nz, nz))
    for j in range(nz):
        dz = np.zeros(nz)
        h = 1e-7 * max(1.0, abs(z0[j]))
        dz[j] = h
        fp, _ = f(z0 + dz, v0)
        fm, _ = f(z0 - dz, v0)
        J[:, j] = (fp - fm) / (2 * h)
    labels = [f"{nm}:{s}" for nm in model.sg_names for s in SG_STATES]
    labels += [f"{nm}:{s}" for nm in model.dfig_names for s in DF_STATES]
    return J, labels


def report(c, n_top=6, title=""):
    J, labels = linearize(c)
    ev, evec = np.linalg.eig(J)
    idx = np.argsort(-ev.real)
    print(title)
    shown = 0
    for i in idx:
        if shown >= n_top:
            break
        if ev[i].imag < -1e-9:
            continue  # conjugate partner
        vec = np.abs(evec[:, i])
        top = np.argsort(-vec)[:4]
        parts = ", ".join(f"{labels[t]}={vec[t]:.2f}" for t in top)
        print(f"  {ev[i].real:+8.3f} {abs(ev[i].imag):7.3f}j : {parts}")
        shown += 1


if __name__ == "__main__":
    base_doc = case_to_dict(load_case(os.path.join(os.path.dirname(__file__), "..", "cases", "ieee39.json")))
    over = json.loads(sys.argv[2]) if len(sys.argv) > 2 else {}
    lvl = int(sys.argv[1]) if len(sys.argv) > 1 else 50
    c = build_variant(base_doc, dfig_over=over)
    c = apply_wind_penetration(c, PENETRATION_LEVELS[lvl])
    report(c, n_top=8, title=f"penetration {lvl}% overrides={over}")

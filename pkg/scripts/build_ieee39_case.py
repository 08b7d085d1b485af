"""Regenerate cases/ieee39.json from the tabulated New England 39-bus data.

Static network data (branches, loads, voltage setpoints, dispatch) is the classic
10-machine New England test system dataset (Pai, "Energy Function Analysis for
Power System Stability", 1989). Machine xd/xq/xd'/xq'/Tdo'/Tqo'/H come from the
same dataset (given there on the 100 MVA system base; converted here to machine
base). Subtransient constants, damping, governor/exciter/stabilizer blocks and
the DFIG template are typical values chosen for this package; each block's
"source" note in the emitted file records which of the two origins applies.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

SYS_MVA = 100.0

# from, to, r, x, b (total charging), tap (0 -> plain line)
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987, 0.0),
    (1, 39, 0.0010, 0.0250, 0.7500, 0.0),
    (2, 3, 0.0013, 0.0151, 0.2572, 0.0),
    (2, 25, 0.0070, 0.0086, 0.1460, 0.0),
    (3, 4, 0.0013, 0.0213, 0.2214, 0.0),
    (3, 18, 0.0011, 0.0133, 0.2138, 0.0),
    (4, 5, 0.0008, 0.0128, 0.1342, 0.0),
    (4, 14, 0.0008, 0.0129, 0.1382, 0.0),
    (5, 6, 0.0002, 0.0026, 0.0434, 0.0),
    (5, 8, 0.0008, 0.0112, 0.1476, 0.0),
    (6, 7, 0.0006, 0.0092, 0.1130, 0.0),
    (6, 11, 0.0007, 0.0082, 0.1389, 0.0),
    (7, 8, 0.0004, 0.0046, 0.0780, 0.0),
    (8, 9, 0.0023, 0.0363, 0.3804, 0.0),
    (9, 39, 0.0010, 0.0250, 1.2000, 0.0),
    (10, 11, 0.0004, 0.0043, 0.0729, 0.0),
    (10, 13, 0.0004, 0.0043, 0.0729, 0.0),
    (13, 14, 0.0009, 0.0101, 0.1723, 0.0),
    (14, 15, 0.0018, 0.0217, 0.3660, 0.0),
    (15, 16, 0.0009, 0.0094, 0.1710, 0.0),
    (16, 17, 0.0007, 0.0089, 0.1342, 0.0),
    (16, 19, 0.0016, 0.0195, 0.3040, 0.0),
    (16, 21, 0.0008, 0.0135, 0.2548, 0.0),
    (16, 24, 0.0003, 0.0059, 0.0680, 0.0),
    (17, 18, 0.0007, 0.0082, 0.1319, 0.0),
    (17, 27, 0.0013, 0.0173, 0.3216, 0.0),
    (21, 22, 0.0008, 0.0140, 0.2565, 0.0),
    (22, 23, 0.0006, 0.0096, 0.1846, 0.0),
    (23, 24, 0.0022, 0.0350, 0.3610, 0.0),
    (25, 26, 0.0032, 0.0323, 0.5130, 0.0),
    (26, 27, 0.0014, 0.0147, 0.2396, 0.0),
    (26, 28, 0.0043, 0.0474, 0.7802, 0.0),
    (26, 29, 0.0057, 0.0625, 1.0290, 0.0),
    (28, 29, 0.0014, 0.0151, 0.2490, 0.0),
    # transformers
    (12, 11, 0.0016, 0.0435, 0.0, 1.006),
    (12, 13, 0.0016, 0.0435, 0.0, 1.006),
    (6, 31, 0.0000, 0.0250, 0.0, 1.070),
    (10, 32, 0.0000, 0.0200, 0.0, 1.070),
    (19, 33, 0.0007, 0.0142, 0.0, 1.070),
    (20, 34, 0.0009, 0.0180, 0.0, 1.009),
    (22, 35, 0.0000, 0.0143, 0.0, 1.025),
    (23, 36, 0.0005, 0.0272, 0.0, 1.000),
    (25, 37, 0.0006, 0.0232, 0.0, 1.025),
    (2, 30, 0.0000, 0.0181, 0.0, 1.025),
    (29, 38, 0.0008, 0.0156, 0.0, 1.025),
    (19, 20, 0.0007, 0.0138, 0.0, 1.060),
]

LOADS = {
    3: (322.0, 2.4), 4: (500.0, 184.0), 7: (233.8, 84.0), 8: (522.0, 176.0),
    12: (7.5, 88.0), 15: (320.0, 153.0), 16: (329.0, 32.3), 18: (158.0, 30.0),
    20: (628.0, 103.0), 21: (274.0, 115.0), 23: (247.5, 84.6), 24: (308.6, -92.0),
    25: (224.0, 47.2), 26: (139.0, 17.0), 27: (281.0, 75.5), 28: (206.0, 27.6),
    29: (283.5, 26.9), 31: (9.2, 4.6), 39: (1104.0, 250.0),
}

# name, bus, dispatch MW, rating MVA, Vset, then system-base dynamic data:
# H, xd, xq, xdp, xqp, Tdo', Tqo'  (G10 q-axis transient repaired to typical
# values; the source table has Tqo'=0 there, which disables the q-axis chain)
GENS = [
    ("G1", 39, 1000.0, 1000.0, 1.0300, 500.0, 0.020, 0.019, 0.0060, 0.0080, 7.00, 0.70),
    ("G2", 31, 520.81, 1600.0, 0.9820, 30.3, 0.295, 0.282, 0.0697, 0.1700, 6.56, 1.50),
    ("G3", 32, 650.0, 650.0, 0.9831, 35.8, 0.2495, 0.237, 0.0531, 0.0876, 5.70, 1.50),
    ("G4", 33, 632.0, 632.0, 0.9972, 28.6, 0.262, 0.258, 0.0436, 0.1660, 5.69, 1.50),
    ("G5", 34, 508.0, 508.0, 1.0123, 26.0, 0.670, 0.620, 0.1320, 0.1660, 5.40, 0.44),
    ("G6", 35, 650.0, 650.0, 1.0493, 34.8, 0.254, 0.241, 0.0500, 0.0814, 7.30, 0.40),
    ("G7", 36, 560.0, 560.0, 1.0635, 26.4, 0.295, 0.292, 0.0490, 0.1860, 5.66, 1.50),
    ("G8", 37, 540.0, 540.0, 1.0278, 24.3, 0.290, 0.280, 0.0570, 0.0911, 6.70, 0.41),
    ("G9", 38, 830.0, 830.0, 1.0265, 34.5, 0.2106, 0.205, 0.0570, 0.0587, 4.79, 1.96),
    ("G10", 30, 250.0, 250.0, 1.0475, 42.0, 0.100, 0.069, 0.0310, 0.0480, 10.20, 1.00),
]

SLACK_BUS = 31

GOVERNOR = {"r": 0.05, "t1": 0.5, "t2": 2.1, "t3": 7.0, "dt": 0.0, "vmax": 1.1, "vmin": 0.0}
EXCITER = {
    "tr": 0.02, "ka": 50.0, "ta": 0.05, "ke": 1.0, "te": 0.5,
    "kf": 0.05, "tf": 1.0, "vrmax": 6.0, "vrmin": -6.0,
}
PSS = {"k": 10.0, "tw": 10.0, "t1": 0.12, "t2": 0.025, "t3": 0.12, "t4": 0.025,
       "vmax": 0.1, "vmin": -0.1}

DFIG_TEMPLATE = {
    "h_g": 0.9, "h_t": 4.0, "x": 3.1, "xp": 0.178, "to": 0.82, "rs": 0.01,
    "lm": 3.0, "lr": 0.08, "k_tw": 0.3, "d_tw": 1.5, "i_max": 1.1,
    "v_crowbar_on": 0.35, "v_crowbar_off": 0.5, "crowbar_r_factor": 5.0,
    "kp_e": 0.1, "ki_e": 2.0, "kq_v": 2.0, "v_q_priority": 0.9, "speed_ref": 1.2, "k_speed": 10.0,
}


def r6(v):
    return float(f"{v:.6g}")


def main():
    gen_buses = {g[1]: g for g in GENS}
    buses = []
    for bid in range(1, 40):
        kind = "PQ"
        vset = None
        if bid in gen_buses:
            kind = "slack" if bid == SLACK_BUS else "PV"
            vset = gen_buses[bid][4]
        buses.append({
            "id": bid, "name": f"Bus {bid}", "base_kv": 345.0, "kind": kind,
            "v_setpoint": vset, "shunt_g": 0.0, "shunt_b": 0.0,
        })

    branches = []
    for k, (f, t, r, x, b, tap) in enumerate(BRANCHES, start=1):
        branches.append({
            "id": k, "from_bus": f, "to_bus": t, "r": r, "x": x, "b_charging": b,
            "tap": 1.0 if tap == 0.0 else tap, "is_line": tap == 0.0,
            "z2": None, "z0": None,
        })

    loads = [{"bus": b, "p_mw": p, "q_mvar": q} for b, (p, q) in sorted(LOADS.items())]

    generators = []
    for name, bus, p_mw, rating, vset, h_sys, xd, xq, xdp, xqp, tdo, tqo in GENS:
        k = rating / SYS_MVA  # system-base pu -> machine-base pu
        xdpp = 0.7 * xdp * k
        machine = {
            "tj": r6(2.0 * h_sys * SYS_MVA / rating), "d": 2.0, "ra": 0.0,
            "xd": r6(xd * k), "xq": r6(xq * k),
            "xdp": r6(xdp * k), "xqp": r6(xqp * k),
            "xdpp": r6(xdpp), "xqpp": r6(xdpp),
            "tdo_p": tdo, "tqo_p": tqo, "tdo_pp": 0.05, "tqo_pp": 0.05,
        }
        generators.append({
            "name": name, "bus": bus, "kind": "synchronous",
            "mva_rating": rating, "p_dispatch_mw": p_mw, "v_setpoint": vset,
            "machine": machine, "governor": dict(GOVERNOR),
            "exciter": dict(EXCITER), "pss": dict(PSS),
        })

    doc = {
        "name": "ieee39",
        "system_mva_base": SYS_MVA,
        "nominal_hz": 60.0,
        "source_notes": {
            "static_network": "New England 39-bus dataset (Pai 1989): lines, transformers, loads, dispatch, voltage setpoints",
            "machine_second_order": "Pai 1989 dataset (H, xd, xq, xd', xq', Tdo', Tqo'), converted to machine MVA base; G10 q-axis transient repaired to typical values",
            "machine_subtransient": "typical values: x''=0.7*xd' on both axes, Tdo''=Tqo''=0.05 s, D=2.0",
            "controllers": "typical turbine-governor / AVR / stabilizer constants (not part of the source dataset)",
            "dfig_template": "typical aggregate DFIG constants (not part of the source dataset)",
            "sequence_data": "omitted; loader defaults z2=z1, z0=3*z1 and flags the default",
        },
        "buses": buses,
        "branches": branches,
        "loads": loads,
        "generators": generators,
        "dfig_template": dict(DFIG_TEMPLATE),
    }

    out = os.path.join(os.path.dirname(__file__), "..", "cases", "ieee39.json")
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {os.path.normpath(out)}")

    from gridrisk.netmodel import load_case

    case = load_case(out)
    print(f"buses={case.n_bus} gens={len(case.generators)} "
          f"lines={len(case.lines)} xfmrs={len(case.branches) - len(case.lines)}")
    print(f"total load = {case.total_load_mw():.1f} MW, "
          f"total dispatch = {case.total_dispatch_mw():.2f} MW")


if __name__ == "__main__":
    main()

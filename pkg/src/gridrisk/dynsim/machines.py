"""Machine assembly, initialization and reference derivative functions.

The simulator packs every unit's constants into flat float arrays (one row per
machine) so the integration kernel can run without Python objects. The functions
here are the readable reference implementation of the machine equations; the
compiled kernel mirrors them loop-for-loop and a regression test keeps the two
in lockstep.

Orientation conventions (synchronous machines): the q-axis leads the d-axis;
a machine-frame pair (f_d, f_q) maps to the network phasor (f_q - j f_d) e^{j delta}.
Generator convention throughout: positive stator current flows into the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InitializationError
from ..netmodel import PowerSystemCase
from ..powerflow import PowerFlowSolution

# SG parameter columns (machine base unless noted; s_ratio = S_mach / S_system)
SGP_SRATIO, SGP_TJ, SGP_D, SGP_RA = 0, 1, 2, 3
SGP_XD, SGP_XQ, SGP_XDP, SGP_XQP, SGP_XDPP, SGP_XQPP = 4, 5, 6, 7, 8, 9
SGP_TDOP, SGP_TQOP, SGP_TDOPP, SGP_TQOPP = 10, 11, 12, 13
SGP_GOV_R, SGP_GOV_T1, SGP_GOV_T2, SGP_GOV_T3 = 14, 15, 16, 17
SGP_GOV_DT, SGP_GOV_VMAX, SGP_GOV_VMIN, SGP_GOV_PREF = 18, 19, 20, 21
SGP_EXC_TR, SGP_EXC_KA, SGP_EXC_TA, SGP_EXC_KE, SGP_EXC_TE = 22, 23, 24, 25, 26
SGP_EXC_KF, SGP_EXC_TF, SGP_EXC_VRMAX, SGP_EXC_VRMIN, SGP_EXC_VREF = 27, 28, 29, 30, 31
SGP_PSS_K, SGP_PSS_TW, SGP_PSS_T1, SGP_PSS_T2 = 32, 33, 34, 35
SGP_PSS_T3, SGP_PSS_T4, SGP_PSS_VMAX, SGP_PSS_VMIN = 36, 37, 38, 39
N_SG_PAR = 40

# SG state columns
SGX_DELTA, SGX_OMEGA = 0, 1
SGX_EQP, SGX_EDP, SGX_EQPP, SGX_EDPP = 2, 3, 4, 5
SGX_GOV1, SGX_GOV2 = 6, 7
SGX_VM, SGX_VR, SGX_EFD, SGX_XF = 8, 9, 10, 11
SGX_PSSW, SGX_PSS1, SGX_PSS2 = 12, 13, 14
N_SG_STATE = 15

# DFIG parameter columns
DFP_SRATIO, DFP_HG, DFP_HT, DFP_X, DFP_XP, DFP_TO, DFP_RS = 0, 1, 2, 3, 4, 5, 6
DFP_LM, DFP_LR, DFP_KTW, DFP_DTW, DFP_IMAX = 7, 8, 9, 10, 11
DFP_VCBON, DFP_VCBOFF, DFP_CBFACT, DFP_KP, DFP_KI = 12, 13, 14, 15, 16
DFP_KQV, DFP_VQPRI, DFP_PREF, DFP_QREF, DFP_VSET, DFP_TM = 17, 18, 19, 20, 21, 22
DFP_KSPD, DFP_WREF = 23, 24
N_DFIG_PAR = 25

# DFIG state columns
DFX_ED, DFX_EQ, DFX_WR, DFX_WT, DFX_THTW, DFX_XID, DFX_XIQ = 0, 1, 2, 3, 4, 5, 6
N_DFIG_STATE = 7


@dataclass
class SimModel:
    """Per-case packed machine data shared by init and the kernel."""

    omega_b: float                 # 2*pi*f_nominal, rad/s
    sg_names: tuple[str, ...]
    sg_par: np.ndarray             # (n_sg, N_SG_PAR)
    sg_bus: np.ndarray             # (n_sg,) positions in case bus order
    sg_ynorton: np.ndarray         # (n_sg,) complex, system base
    dfig_names: tuple[str, ...]
    dfig_par: np.ndarray
    dfig_bus: np.ndarray
    dfig_ynorton: np.ndarray


def assemble(case: PowerSystemCase) -> SimModel:
    """Pack machine constants into kernel-ready arrays (references unresolved
    until :func:`initialize`, which fills dispatch-dependent columns)."""
    omega_b = 2.0 * np.pi * case.nominal_hz
    sgs = case.sync_generators
    dfs = case.dfig_generators
    base = case.system_mva_base

    sg_par = np.zeros((len(sgs), N_SG_PAR))
    sg_bus = np.zeros(len(sgs), dtype=np.int64)
    sg_yn = np.zeros(len(sgs), dtype=complex)
    for k, g in enumerate(sgs):
        m = g.machine
        c = g.controllers
        ratio = g.mva_rating / base
        row = sg_par[k]
        row[SGP_SRATIO] = ratio
        row[SGP_TJ], row[SGP_D], row[SGP_RA] = m.tj, m.d, m.ra
        row[SGP_XD], row[SGP_XQ] = m.xd, m.xq
        row[SGP_XDP], row[SGP_XQP] = m.xdp, m.xqp
        row[SGP_XDPP], row[SGP_XQPP] = m.xdpp, m.xqpp
        row[SGP_TDOP], row[SGP_TQOP] = m.tdo_p, m.tqo_p
        row[SGP_TDOPP], row[SGP_TQOPP] = m.tdo_pp, m.tqo_pp
        row[SGP_GOV_R], row[SGP_GOV_T1] = c.governor.r, c.governor.t1
        row[SGP_GOV_T2], row[SGP_GOV_T3] = c.governor.t2, c.governor.t3
        row[SGP_GOV_DT] = c.governor.dt
        row[SGP_GOV_VMAX], row[SGP_GOV_VMIN] = c.governor.vmax, c.governor.vmin
        row[SGP_EXC_TR], row[SGP_EXC_KA], row[SGP_EXC_TA] = c.exciter.tr, c.exciter.ka, c.exciter.ta
        row[SGP_EXC_KE], row[SGP_EXC_TE] = c.exciter.ke, c.exciter.te
        row[SGP_EXC_KF], row[SGP_EXC_TF] = c.exciter.kf, c.exciter.tf
        row[SGP_EXC_VRMAX], row[SGP_EXC_VRMIN] = c.exciter.vrmax, c.exciter.vrmin
        row[SGP_PSS_K], row[SGP_PSS_TW] = c.pss.k, c.pss.tw
        row[SGP_PSS_T1], row[SGP_PSS_T2] = c.pss.t1, c.pss.t2
        row[SGP_PSS_T3], row[SGP_PSS_T4] = c.pss.t3, c.pss.t4
        row[SGP_PSS_VMAX], row[SGP_PSS_VMIN] = c.pss.vmax, c.pss.vmin
        sg_bus[k] = case.bus_index(g.bus)
        xavg = 0.5 * (m.xdpp + m.xqpp)
        sg_yn[k] = ratio / complex(m.ra, xavg)

    dfig_par = np.zeros((len(dfs), N_DFIG_PAR))
    dfig_bus = np.zeros(len(dfs), dtype=np.int64)
    dfig_yn = np.zeros(len(dfs), dtype=complex)
    for k, g in enumerate(dfs):
        m = g.machine
        ratio = g.mva_rating / base
        row = dfig_par[k]
        row[DFP_SRATIO] = ratio
        row[DFP_HG], row[DFP_HT] = m.h_g, m.h_t
        row[DFP_X], row[DFP_XP], row[DFP_TO], row[DFP_RS] = m.x, m.xp, m.to, m.rs
        row[DFP_LM], row[DFP_LR] = m.lm, m.lr
        row[DFP_KTW], row[DFP_DTW], row[DFP_IMAX] = m.k_tw, m.d_tw, m.i_max
        row[DFP_VCBON], row[DFP_VCBOFF] = m.v_crowbar_on, m.v_crowbar_off
        row[DFP_CBFACT] = m.crowbar_r_factor
        row[DFP_KP], row[DFP_KI] = m.kp_e, m.ki_e
        row[DFP_KQV], row[DFP_VQPRI] = m.kq_v, m.v_q_priority
        row[DFP_KSPD], row[DFP_WREF] = m.k_speed, m.speed_ref
        row[DFP_PREF] = g.p_dispatch_mw / g.mva_rating
        row[DFP_VSET] = g.v_setpoint
        dfig_bus[k] = case.bus_index(g.bus)
        dfig_yn[k] = ratio / complex(m.rs, m.xp)

    return SimModel(
        omega_b=omega_b,
        sg_names=tuple(g.name for g in sgs),
        sg_par=sg_par, sg_bus=sg_bus, sg_ynorton=sg_yn,
        dfig_names=tuple(g.name for g in dfs),
        dfig_par=dfig_par, dfig_bus=dfig_bus, dfig_ynorton=dfig_yn,
    )


# ---------------------------------------------------------------------------
# Synchronous machine algebra
# ---------------------------------------------------------------------------

def sg_currents(x: np.ndarray, par: np.ndarray, v_bus: np.ndarray):
    """Stator currents from the subtransient EMFs and the bus voltage.

    Returns (id, iq, vd, vq, vt, i_net) with dq quantities on the machine base
    and i_net the complex injection on the system base.
    """
    delta = x[:, SGX_DELTA]
    rot = np.exp(-1j * delta)
    vrot = v_bus * rot
    vq = vrot.real
    vd = -vrot.imag
    ra = par[:, SGP_RA]
    xdpp = par[:, SGP_XDPP]
    xqpp = par[:, SGP_XQPP]
    det = ra * ra + xdpp * xqpp
    ed = x[:, SGX_EDPP] - vd
    eq = x[:, SGX_EQPP] - vq
    i_d = (ra * ed + xqpp * eq) / det
    i_q = (-xdpp * ed + ra * eq) / det
    i_net = (i_q - 1j * i_d) * np.exp(1j * delta) * par[:, SGP_SRATIO]
    return i_d, i_q, vd, vq, np.abs(v_bus), i_net


def sg_derivatives(x: np.ndarray, par: np.ndarray, i_d, i_q, vt, omega_b: float):
    """Time derivatives of all synchronous-machine and controller states.

    ``i_d``/``i_q`` are machine-base stator currents, ``vt`` the terminal-voltage
    magnitude. Swing runs on torques: accelerating torque divided by the
    acceleration time constant, with damping on per-unit speed deviation.
    """
    dx = np.zeros_like(x)
    omega = x[:, SGX_OMEGA]
    dev = omega - 1.0

    # governor: droop on speed deviation, valve servo, reheat lead-lag
    u = par[:, SGP_GOV_PREF] - dev / par[:, SGP_GOV_R]
    dx[:, SGX_GOV1] = (u - x[:, SGX_GOV1]) / par[:, SGP_GOV_T1]
    ratio23 = par[:, SGP_GOV_T2] / par[:, SGP_GOV_T3]
    dx[:, SGX_GOV2] = (x[:, SGX_GOV1] * (1.0 - ratio23) - x[:, SGX_GOV2]) / par[:, SGP_GOV_T3]
    pm = x[:, SGX_GOV2] + ratio23 * x[:, SGX_GOV1] - par[:, SGP_GOV_DT] * dev

    # stabilizer: washout then two lead-lag stages, clamped output
    y1 = par[:, SGP_PSS_K] * (dev - x[:, SGX_PSSW])
    dx[:, SGX_PSSW] = (dev - x[:, SGX_PSSW]) / par[:, SGP_PSS_TW]
    r12 = par[:, SGP_PSS_T1] / par[:, SGP_PSS_T2]
    y2 = r12 * y1 + (1.0 - r12) * x[:, SGX_PSS1]
    dx[:, SGX_PSS1] = (y1 - x[:, SGX_PSS1]) / par[:, SGP_PSS_T2]
    r34 = par[:, SGP_PSS_T3] / par[:, SGP_PSS_T4]
    y3 = r34 * y2 + (1.0 - r34) * x[:, SGX_PSS2]
    dx[:, SGX_PSS2] = (y2 - x[:, SGX_PSS2]) / par[:, SGP_PSS_T4]
    vpss = np.minimum(np.maximum(y3, par[:, SGP_PSS_VMIN]), par[:, SGP_PSS_VMAX])

    # exciter: transducer, regulator (clamped), rotating exciter, rate feedback
    dx[:, SGX_VM] = (vt - x[:, SGX_VM]) / par[:, SGP_EXC_TR]
    vf = par[:, SGP_EXC_KF] / par[:, SGP_EXC_TF] * (x[:, SGX_EFD] - x[:, SGX_XF])
    dx[:, SGX_XF] = (x[:, SGX_EFD] - x[:, SGX_XF]) / par[:, SGP_EXC_TF]
    verr = par[:, SGP_EXC_VREF] - x[:, SGX_VM] + vpss - vf
    dx[:, SGX_VR] = (par[:, SGP_EXC_KA] * verr - x[:, SGX_VR]) / par[:, SGP_EXC_TA]
    dx[:, SGX_EFD] = (x[:, SGX_VR] - par[:, SGP_EXC_KE] * x[:, SGX_EFD]) / par[:, SGP_EXC_TE]

    # EMF chains: field drives E'q/E''q, q-axis circuit drives E'd/E''d
    dx[:, SGX_EQP] = (
        x[:, SGX_EFD] - x[:, SGX_EQP] - (par[:, SGP_XD] - par[:, SGP_XDP]) * i_d
    ) / par[:, SGP_TDOP]
    dx[:, SGX_EDP] = (
        -x[:, SGX_EDP] + (par[:, SGP_XQ] - par[:, SGP_XQP]) * i_q
    ) / par[:, SGP_TQOP]
    dx[:, SGX_EQPP] = (
        x[:, SGX_EQP] - x[:, SGX_EQPP] - (par[:, SGP_XDP] - par[:, SGP_XDPP]) * i_d
    ) / par[:, SGP_TDOPP]
    dx[:, SGX_EDPP] = (
        x[:, SGX_EDP] - x[:, SGX_EDPP] + (par[:, SGP_XQP] - par[:, SGP_XQPP]) * i_q
    ) / par[:, SGP_TQOPP]

    # swing: airgap torque from the subtransient EMFs
    pe = (
        x[:, SGX_EDPP] * i_d + x[:, SGX_EQPP] * i_q
        + (par[:, SGP_XQPP] - par[:, SGP_XDPP]) * i_d * i_q
    )
    mm = pm / omega
    mc = pe / omega
    dx[:, SGX_OMEGA] = (mm - mc - par[:, SGP_D] * dev) / par[:, SGP_TJ]
    dx[:, SGX_DELTA] = omega_b * dev
    return dx


def sg_clamp(x: np.ndarray, par: np.ndarray) -> None:
    """Windup clamps on the limited controller states (in place)."""
    np.clip(x[:, SGX_GOV1], par[:, SGP_GOV_VMIN], par[:, SGP_GOV_VMAX], out=x[:, SGX_GOV1])
    np.clip(x[:, SGX_VR], par[:, SGP_EXC_VRMIN], par[:, SGP_EXC_VRMAX], out=x[:, SGX_VR])


def sg_self_coefficients(par: np.ndarray) -> np.ndarray:
    """Linear self-term of each state's derivative (for implicit row solves).

    The subtransient EMF rows include their algebraic coupling through the
    machine's own stator current; that feedback otherwise dominates the sweep
    contraction. Any choice here leaves the converged step unchanged.
    """
    a = np.zeros((par.shape[0], N_SG_STATE))
    det = par[:, SGP_RA] ** 2 + par[:, SGP_XDPP] * par[:, SGP_XQPP]
    a[:, SGX_OMEGA] = -par[:, SGP_D] / par[:, SGP_TJ]
    a[:, SGX_EQP] = -1.0 / par[:, SGP_TDOP]
    a[:, SGX_EDP] = -1.0 / par[:, SGP_TQOP]
    a[:, SGX_EQPP] = (-1.0 - (par[:, SGP_XDP] - par[:, SGP_XDPP])
                      * par[:, SGP_XQPP] / det) / par[:, SGP_TDOPP]
    a[:, SGX_EDPP] = (-1.0 - (par[:, SGP_XQP] - par[:, SGP_XQPP])
                      * par[:, SGP_XDPP] / det) / par[:, SGP_TQOPP]
    a[:, SGX_GOV1] = -1.0 / par[:, SGP_GOV_T1]
    a[:, SGX_GOV2] = -1.0 / par[:, SGP_GOV_T3]
    a[:, SGX_VM] = -1.0 / par[:, SGP_EXC_TR]
    a[:, SGX_VR] = -1.0 / par[:, SGP_EXC_TA]
    a[:, SGX_EFD] = -par[:, SGP_EXC_KE] / par[:, SGP_EXC_TE]
    a[:, SGX_XF] = -1.0 / par[:, SGP_EXC_TF]
    a[:, SGX_PSSW] = -1.0 / par[:, SGP_PSS_TW]
    a[:, SGX_PSS1] = -1.0 / par[:, SGP_PSS_T2]
    a[:, SGX_PSS2] = -1.0 / par[:, SGP_PSS_T4]
    return a


def dfig_self_coefficients(par: np.ndarray) -> np.ndarray:
    """DFIG counterpart of :func:`sg_self_coefficients` (crowbar off)."""
    a = np.zeros((par.shape[0], N_DFIG_STATE))
    wim = par[:, DFP_XP] / (par[:, DFP_RS] ** 2 + par[:, DFP_XP] ** 2)
    k_cur = 1.0 + (par[:, DFP_X] - par[:, DFP_XP]) * wim
    a[:, DFX_ED] = -k_cur / par[:, DFP_TO]
    a[:, DFX_EQ] = -k_cur / par[:, DFP_TO]
    a[:, DFX_WR] = -par[:, DFP_DTW] / (2.0 * par[:, DFP_HG])
    a[:, DFX_WT] = -par[:, DFP_DTW] / (2.0 * par[:, DFP_HT])
    return a


# ---------------------------------------------------------------------------
# DFIG algebra
# ---------------------------------------------------------------------------

def dfig_stator_current(x: np.ndarray, par: np.ndarray, v_bus: np.ndarray) -> np.ndarray:
    """Machine-base stator current delivered to the network: (e - v) / (rs + j xp)."""
    e = x[:, DFX_ED] + 1j * x[:, DFX_EQ]
    return (e - v_bus) / (par[:, DFP_RS] + 1j * par[:, DFP_XP])


def dfig_rotor_voltage(x: np.ndarray, par: np.ndarray, v_bus: np.ndarray,
                       crowbar: np.ndarray):
    """Converter rotor voltages from the decoupled PI tracking loops.

    The converter turns its P/Q commands into an internal-voltage target
    e* = v + (rs + j xp) i*, clamps |i*| at the converter limit (reactive power
    has priority at depressed voltage), and drives e toward e* with one PI per
    axis. While the crowbar is on, both rotor voltages are zero.
    """
    vmag = np.abs(v_bus)
    i_s = dfig_stator_current(x, par, v_bus)
    s_stator = v_bus * np.conj(i_s)

    q_cmd = par[:, DFP_QREF] + par[:, DFP_KQV] * (par[:, DFP_VSET] - vmag)
    p_cmd = par[:, DFP_PREF] + par[:, DFP_KSPD] * (x[:, DFX_WR] - par[:, DFP_WREF])
    vg = np.maximum(vmag, 1e-3)
    ip = p_cmd / vg
    iq = q_cmd / vg
    imax = par[:, DFP_IMAX]
    q_first = vmag < par[:, DFP_VQPRI]
    iq_l = np.where(q_first, np.clip(iq, -imax, imax), iq)
    head_p = np.sqrt(np.maximum(imax**2 - iq_l**2, 0.0))
    ip_l = np.where(q_first, np.clip(ip, -head_p, head_p), np.clip(ip, -imax, imax))
    head_q = np.sqrt(np.maximum(imax**2 - ip_l**2, 0.0))
    iq_l = np.where(q_first, iq_l, np.clip(iq, -head_q, head_q))

    s_target = (ip_l + 1j * iq_l) * vg
    i_target = np.conj(s_target / np.where(np.abs(v_bus) < 1e-6, 1.0, v_bus))
    e_target = v_bus + (par[:, DFP_RS] + 1j * par[:, DFP_XP]) * i_target

    err_d = e_target.real - x[:, DFX_ED]
    err_q = e_target.imag - x[:, DFX_EQ]
    # slip-flux decoupling feedforward cancels the rotational coupling of the
    # internal voltage, leaving the PI loops a slip-independent plant
    kc = par[:, DFP_LM] / (par[:, DFP_LM] + par[:, DFP_LR])
    slip = 1.0 - x[:, DFX_WR]
    v_qr = slip * x[:, DFX_EQ] / kc - (par[:, DFP_KP] * err_d + x[:, DFX_XID])
    v_dr = slip * x[:, DFX_ED] / kc + par[:, DFP_KP] * err_q + x[:, DFX_XIQ]
    off = crowbar.astype(bool)
    v_qr = np.where(off, 0.0, v_qr)
    v_dr = np.where(off, 0.0, v_dr)
    err_d = np.where(off, 0.0, err_d)
    err_q = np.where(off, 0.0, err_q)
    return v_dr, v_qr, err_d, err_q, i_s, s_stator


def dfig_rotor_current(x: np.ndarray, par: np.ndarray, i_s: np.ndarray):
    """Rotor currents from the internal voltage and stator current (flux algebra)."""
    lm = par[:, DFP_LM]
    lrr = lm + par[:, DFP_LR]
    i_dr = x[:, DFX_EQ] / lm + (lm / lrr) * i_s.real
    i_qr = -x[:, DFX_ED] / lm + (lm / lrr) * i_s.imag
    return i_dr, i_qr


def dfig_derivatives(x: np.ndarray, par: np.ndarray, v_bus: np.ndarray,
                     crowbar: np.ndarray, omega_b: float):
    """Time derivatives of the DFIG states plus network-facing outputs.

    Returns (dx, i_net_sys, p_total, q_stator) with powers on the machine base.
    """
    dx = np.zeros_like(x)
    v_dr, v_qr, err_d, err_q, i_s, s_stator = dfig_rotor_voltage(x, par, v_bus, crowbar)
    ids = i_s.real
    iqs = i_s.imag
    kc = par[:, DFP_LM] / (par[:, DFP_LM] + par[:, DFP_LR])
    to_eff = np.where(crowbar.astype(bool),
                      par[:, DFP_TO] / par[:, DFP_CBFACT], par[:, DFP_TO])
    slip = 1.0 - x[:, DFX_WR]

    dx[:, DFX_ED] = (
        -(x[:, DFX_ED] - (par[:, DFP_X] - par[:, DFP_XP]) * iqs) / to_eff
        + omega_b * slip * x[:, DFX_EQ] - omega_b * kc * v_qr
    )
    dx[:, DFX_EQ] = (
        -(x[:, DFX_EQ] + (par[:, DFP_X] - par[:, DFP_XP]) * ids) / to_eff
        - omega_b * slip * x[:, DFX_ED] + omega_b * kc * v_dr
    )
    te = x[:, DFX_ED] * ids + x[:, DFX_EQ] * iqs
    tw = par[:, DFP_KTW] * x[:, DFX_THTW] + par[:, DFP_DTW] * (x[:, DFX_WT] - x[:, DFX_WR])
    dx[:, DFX_WR] = (tw - te) / (2.0 * par[:, DFP_HG])
    dx[:, DFX_WT] = (par[:, DFP_TM] - tw) / (2.0 * par[:, DFP_HT])
    dx[:, DFX_THTW] = omega_b * (x[:, DFX_WT] - x[:, DFX_WR])
    dx[:, DFX_XID] = par[:, DFP_KI] * err_d
    dx[:, DFX_XIQ] = par[:, DFP_KI] * err_q

    i_dr, i_qr = dfig_rotor_current(x, par, i_s)
    p_rotor = v_dr * i_dr + v_qr * i_qr
    p_gsc = -p_rotor
    p_total = s_stator.real + p_gsc
    q_stator = s_stator.imag
    vsafe = np.where(np.abs(v_bus) < 1e-6, 1.0, v_bus)
    i_net = (i_s + p_gsc / np.conj(vsafe)) * par[:, DFP_SRATIO]
    return dx, i_net, p_total, q_stator


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

@dataclass
class DynamicState:
    """Full machine state plus the packed model, ready for simulation."""

    model: SimModel
    sg_x: np.ndarray
    dfig_x: np.ndarray
    crowbar: np.ndarray
    v_bus: np.ndarray          # complex network voltages at t=0 (case bus order)
    max_residual: float


def _bus_generation(case: PowerSystemCase, pf: PowerFlowSolution):
    """Complex generator output per bus (system pu): net injection plus local load."""
    base = case.system_mva_base
    s_gen = {}
    for g in case.generators:
        i = case.bus_index(g.bus)
        load = sum(complex(ld.p_mw, ld.q_mvar) for ld in case.loads if ld.bus == g.bus)
        s_gen[g.bus] = complex(pf.p_inj[i], pf.q_inj[i]) + load / base
    return s_gen


def initialize(case: PowerSystemCase, pf: PowerFlowSolution,
               model: SimModel | None = None) -> DynamicState:
    """Back-solve every machine and controller state so all derivatives vanish.

    Controller references are chosen to hold the power-flow operating point;
    a reference landing outside its limiter raises a named-unit error. The
    returned state carries the worst derivative residual for verification.
    """
    if model is None:
        model = assemble(case)
    v_bus = pf.v_complex
    s_gen_bus = _bus_generation(case, pf)

    # share a bus's generation among its units: P by dispatch, Q by rating
    bus_units: dict[int, list] = {}
    for g in case.generators:
        bus_units.setdefault(g.bus, []).append(g)

    def unit_power(g):
        units = bus_units[g.bus]
        s_bus = s_gen_bus[g.bus]
        rating_sum = sum(u.mva_rating for u in units)
        disp_sum = sum(u.p_dispatch_mw for u in units)
        p = s_bus.real * (g.p_dispatch_mw / disp_sum if disp_sum else 1.0 / len(units))
        q = s_bus.imag * g.mva_rating / rating_sum
        return complex(p, q)

    sgs = case.sync_generators
    n_sg = len(sgs)
    sg_x = np.zeros((n_sg, N_SG_STATE))
    for k, g in enumerate(sgs):
        par = model.sg_par[k]
        ratio = par[SGP_SRATIO]
        v = v_bus[model.sg_bus[k]]
        s_mach = unit_power(g) / ratio
        ia = np.conj(s_mach / v)
        eq_axis = v + complex(par[SGP_RA], par[SGP_XQ]) * ia
        delta = np.angle(eq_axis)
        phi = np.angle(ia)
        i_d = np.abs(ia) * np.sin(delta - phi)
        i_q = np.abs(ia) * np.cos(delta - phi)
        vd = np.abs(v) * np.sin(delta - np.angle(v))
        vq = np.abs(v) * np.cos(delta - np.angle(v))
        efd = np.abs(eq_axis) + (par[SGP_XD] - par[SGP_XQ]) * i_d
        eqp = efd - (par[SGP_XD] - par[SGP_XDP]) * i_d
        eqpp = eqp - (par[SGP_XDP] - par[SGP_XDPP]) * i_d
        edp = (par[SGP_XQ] - par[SGP_XQP]) * i_q
        edpp = edp + (par[SGP_XQP] - par[SGP_XQPP]) * i_q
        pe = edpp * i_d + eqpp * i_q + (par[SGP_XQPP] - par[SGP_XDPP]) * i_d * i_q

        x = sg_x[k]
        x[SGX_DELTA] = delta
        x[SGX_OMEGA] = 1.0
        x[SGX_EQP], x[SGX_EDP] = eqp, edp
        x[SGX_EQPP], x[SGX_EDPP] = eqpp, edpp

        pm0 = pe
        if not (par[SGP_GOV_VMIN] - 1e-9 <= pm0 <= par[SGP_GOV_VMAX] + 1e-9):
            raise InitializationError(
                f"generator {g.name}: governor reference {pm0:.4f} pu outside "
                f"valve limits [{par[SGP_GOV_VMIN]}, {par[SGP_GOV_VMAX]}]"
            )
        par[SGP_GOV_PREF] = pm0
        x[SGX_GOV1] = pm0
        x[SGX_GOV2] = pm0 * (1.0 - par[SGP_GOV_T2] / par[SGP_GOV_T3])

        vr0 = par[SGP_EXC_KE] * efd
        if not (par[SGP_EXC_VRMIN] - 1e-9 <= vr0 <= par[SGP_EXC_VRMAX] + 1e-9):
            raise InitializationError(
                f"generator {g.name}: exciter reference {vr0:.4f} pu outside "
                f"regulator limits [{par[SGP_EXC_VRMIN]}, {par[SGP_EXC_VRMAX]}]"
            )
        x[SGX_VM] = np.abs(v)
        x[SGX_VR] = vr0
        x[SGX_EFD] = efd
        x[SGX_XF] = efd
        par[SGP_EXC_VREF] = np.abs(v) + vr0 / par[SGP_EXC_KA]
        # stabilizer states are zero at synchronous speed

    dfs = case.dfig_generators
    n_df = len(dfs)
    dfig_x = np.zeros((n_df, N_DFIG_STATE))
    crowbar = np.zeros(n_df, dtype=np.int64)
    for k, g in enumerate(dfs):
        par = model.dfig_par[k]
        ratio = par[DFP_SRATIO]
        v = v_bus[model.dfig_bus[k]]
        s_total = unit_power(g) / ratio
        m = g.machine
        kc = m.lm / (m.lm + m.lr)
        wr = m.speed_ref
        slip = 1.0 - wr
        omega_b = model.omega_b
        to_pu_inv = 1.0 / m.to

        s_gsc = 0.0 + 0.0j
        for _ in range(200):
            s_stator = s_total - s_gsc
            i_s = np.conj(s_stator / v)
            e = v + complex(m.rs, m.xp) * i_s
            # rotor voltages holding the internal-voltage equations at rest
            v_qr = (-to_pu_inv / omega_b * (e.real - (m.x - m.xp) * i_s.imag)
                    + slip * e.imag) / kc
            v_dr = (to_pu_inv / omega_b * (e.imag + (m.x - m.xp) * i_s.real)
                    + slip * e.real) / kc
            lrr = m.lm + m.lr
            i_dr = e.imag / m.lm + (m.lm / lrr) * i_s.real
            i_qr = -e.real / m.lm + (m.lm / lrr) * i_s.imag
            p_rotor = v_dr * i_dr + v_qr * i_qr
            s_gsc_new = complex(-p_rotor, 0.0)
            if abs(s_gsc_new - s_gsc) < 1e-13:
                s_gsc = s_gsc_new
                break
            s_gsc = s_gsc_new
        else:
            raise InitializationError(
                f"generator {g.name}: converter power balance did not settle"
            )

        s_stator = s_total - s_gsc
        i_s = np.conj(s_stator / v)
        e = v + complex(m.rs, m.xp) * i_s
        te = e.real * i_s.real + e.imag * i_s.imag
        x = dfig_x[k]
        x[DFX_ED], x[DFX_EQ] = e.real, e.imag
        x[DFX_WR] = wr
        x[DFX_WT] = wr
        x[DFX_THTW] = te / m.k_tw
        x[DFX_XID] = -(v_qr - slip * e.imag / kc)
        x[DFX_XIQ] = v_dr - slip * e.real / kc
        # anchor references on the converged operating point so t=0 errors vanish;
        # the converter commands stator power, the grid-side converter passes
        # rotor power through on top
        par[DFP_PREF] = s_stator.real
        par[DFP_QREF] = s_stator.imag - par[DFP_KQV] * (par[DFP_VSET] - np.abs(v))
        par[DFP_TM] = te
        i_mag = abs(i_s)
        if i_mag > m.i_max + 1e-9:
            raise InitializationError(
                f"generator {g.name}: dispatch needs {i_mag:.3f} pu stator current, "
                f"over the converter limit {m.i_max} pu"
            )

    state = DynamicState(
        model=model, sg_x=sg_x, dfig_x=dfig_x, crowbar=crowbar,
        v_bus=v_bus.copy(), max_residual=0.0,
    )
    state.max_residual = residual_norm(state)
    return state


def residual_norm(state: DynamicState) -> float:
    """Infinity-norm of all state derivatives at the stored network voltages."""
    model = state.model
    worst = 0.0
    if state.sg_x.shape[0]:
        i_d, i_q, vd, vq, vt, _ = sg_currents(
            state.sg_x, model.sg_par, state.v_bus[model.sg_bus]
        )
        dx = sg_derivatives(state.sg_x, model.sg_par, i_d, i_q, vt, model.omega_b)
        worst = max(worst, float(np.max(np.abs(dx))))
    if state.dfig_x.shape[0]:
        dxd, _, _, _ = dfig_derivatives(
            state.dfig_x, model.dfig_par, state.v_bus[model.dfig_bus],
            state.crowbar, model.omega_b,
        )
        worst = max(worst, float(np.max(np.abs(dxd))))
    return worst

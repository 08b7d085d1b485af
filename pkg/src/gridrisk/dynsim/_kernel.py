"""Compiled fixed-step integrator: trapezoidal states, partitioned network solve.

This mirrors the reference math in :mod:`gridrisk.dynsim.machines` with explicit
loops so numba can compile it; tests pin the two implementations against each
other. Set ``NUMBA_DISABLE_JIT=1`` to run it as plain Python.

Per step the differential states advance by one trapezoidal update and the
network voltages by one linear solve, iterated together until neither moves
(capped at MAX_SWEEPS; quiet steps exit after one or two sweeps). Each state's
linear self-term, including the subtransient EMFs' algebraic coupling through
their own stator current, is solved exactly within the sweep, which keeps the
iteration contractive around stiff controller lags without changing the
converged step. Topology switches (fault application, clearing, line trip)
swap the pre-inverted admittance matrix between grid points and re-solve the
algebraic voltages at the switch instant.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .machines import (
    SGP_SRATIO, SGP_TJ, SGP_D, SGP_RA,
    SGP_XD, SGP_XQ, SGP_XDP, SGP_XQP, SGP_XDPP, SGP_XQPP,
    SGP_TDOP, SGP_TQOP, SGP_TDOPP, SGP_TQOPP,
    SGP_GOV_R, SGP_GOV_T1, SGP_GOV_T2, SGP_GOV_T3,
    SGP_GOV_DT, SGP_GOV_VMAX, SGP_GOV_VMIN, SGP_GOV_PREF,
    SGP_EXC_TR, SGP_EXC_KA, SGP_EXC_TA, SGP_EXC_KE, SGP_EXC_TE,
    SGP_EXC_KF, SGP_EXC_TF, SGP_EXC_VRMAX, SGP_EXC_VRMIN, SGP_EXC_VREF,
    SGP_PSS_K, SGP_PSS_TW, SGP_PSS_T1, SGP_PSS_T2,
    SGP_PSS_T3, SGP_PSS_T4, SGP_PSS_VMAX, SGP_PSS_VMIN,
    SGX_DELTA, SGX_OMEGA, SGX_EQP, SGX_EDP, SGX_EQPP, SGX_EDPP,
    SGX_GOV1, SGX_GOV2, SGX_VM, SGX_VR, SGX_EFD, SGX_XF,
    SGX_PSSW, SGX_PSS1, SGX_PSS2,
    DFP_SRATIO, DFP_HG, DFP_HT, DFP_X, DFP_XP, DFP_TO, DFP_RS,
    DFP_LM, DFP_LR, DFP_KTW, DFP_DTW, DFP_IMAX,
    DFP_VCBON, DFP_VCBOFF, DFP_CBFACT, DFP_KP, DFP_KI,
    DFP_KQV, DFP_VQPRI, DFP_PREF, DFP_QREF, DFP_VSET, DFP_TM,
    DFP_KSPD, DFP_WREF,
    DFX_ED, DFX_EQ, DFX_WR, DFX_WT, DFX_THTW, DFX_XID, DFX_XIQ,
)

STATUS_COMPLETED = 0
STATUS_STATE_NONFINITE = 1
STATUS_ANGLE_SEPARATION = 2
STATUS_NETWORK_FAILURE = 3

MAX_SWEEPS = 30
TOL_X = 1e-11
TOL_V = 1e-11


@njit(cache=True)
def _eval(omega_b, sg_par, sg_bus, sg_yn, sg_x, dx_sg,
          dfig_par, dfig_bus, dfig_yn, dfig_x, dx_df, crowbar,
          v, inj, df_p, df_q):
    """Injections and state derivatives at (states, voltages). Fills in place."""
    inj[:] = 0.0 + 0.0j
    n_sg = sg_x.shape[0]
    for k in range(n_sg):
        p = sg_par[k]
        vb = v[sg_bus[k]]
        delta = sg_x[k, SGX_DELTA]
        rot = np.exp(-1j * delta)
        vrot = vb * rot
        vq = vrot.real
        vd = -vrot.imag
        ra = p[SGP_RA]
        xdpp = p[SGP_XDPP]
        xqpp = p[SGP_XQPP]
        det = ra * ra + xdpp * xqpp
        ed = sg_x[k, SGX_EDPP] - vd
        eq = sg_x[k, SGX_EQPP] - vq
        i_d = (ra * ed + xqpp * eq) / det
        i_q = (-xdpp * ed + ra * eq) / det
        i_net = (i_q - 1j * i_d) * np.exp(1j * delta) * p[SGP_SRATIO]
        inj[sg_bus[k]] += i_net + sg_yn[k] * vb

        omega = sg_x[k, SGX_OMEGA]
        dev = omega - 1.0
        vt = np.abs(vb)

        u = p[SGP_GOV_PREF] - dev / p[SGP_GOV_R]
        dx_sg[k, SGX_GOV1] = (u - sg_x[k, SGX_GOV1]) / p[SGP_GOV_T1]
        r23 = p[SGP_GOV_T2] / p[SGP_GOV_T3]
        dx_sg[k, SGX_GOV2] = (sg_x[k, SGX_GOV1] * (1.0 - r23) - sg_x[k, SGX_GOV2]) / p[SGP_GOV_T3]
        pm = sg_x[k, SGX_GOV2] + r23 * sg_x[k, SGX_GOV1] - p[SGP_GOV_DT] * dev

        y1 = p[SGP_PSS_K] * (dev - sg_x[k, SGX_PSSW])
        dx_sg[k, SGX_PSSW] = (dev - sg_x[k, SGX_PSSW]) / p[SGP_PSS_TW]
        r12 = p[SGP_PSS_T1] / p[SGP_PSS_T2]
        y2 = r12 * y1 + (1.0 - r12) * sg_x[k, SGX_PSS1]
        dx_sg[k, SGX_PSS1] = (y1 - sg_x[k, SGX_PSS1]) / p[SGP_PSS_T2]
        r34 = p[SGP_PSS_T3] / p[SGP_PSS_T4]
        y3 = r34 * y2 + (1.0 - r34) * sg_x[k, SGX_PSS2]
        dx_sg[k, SGX_PSS2] = (y2 - sg_x[k, SGX_PSS2]) / p[SGP_PSS_T4]
        vpss = min(max(y3, p[SGP_PSS_VMIN]), p[SGP_PSS_VMAX])

        dx_sg[k, SGX_VM] = (vt - sg_x[k, SGX_VM]) / p[SGP_EXC_TR]
        vf = p[SGP_EXC_KF] / p[SGP_EXC_TF] * (sg_x[k, SGX_EFD] - sg_x[k, SGX_XF])
        dx_sg[k, SGX_XF] = (sg_x[k, SGX_EFD] - sg_x[k, SGX_XF]) / p[SGP_EXC_TF]
        verr = p[SGP_EXC_VREF] - sg_x[k, SGX_VM] + vpss - vf
        dx_sg[k, SGX_VR] = (p[SGP_EXC_KA] * verr - sg_x[k, SGX_VR]) / p[SGP_EXC_TA]
        dx_sg[k, SGX_EFD] = (sg_x[k, SGX_VR] - p[SGP_EXC_KE] * sg_x[k, SGX_EFD]) / p[SGP_EXC_TE]

        dx_sg[k, SGX_EQP] = (
            sg_x[k, SGX_EFD] - sg_x[k, SGX_EQP] - (p[SGP_XD] - p[SGP_XDP]) * i_d
        ) / p[SGP_TDOP]
        dx_sg[k, SGX_EDP] = (
            -sg_x[k, SGX_EDP] + (p[SGP_XQ] - p[SGP_XQP]) * i_q
        ) / p[SGP_TQOP]
        dx_sg[k, SGX_EQPP] = (
            sg_x[k, SGX_EQP] - sg_x[k, SGX_EQPP] - (p[SGP_XDP] - p[SGP_XDPP]) * i_d
        ) / p[SGP_TDOPP]
        dx_sg[k, SGX_EDPP] = (
            sg_x[k, SGX_EDP] - sg_x[k, SGX_EDPP] + (p[SGP_XQP] - p[SGP_XQPP]) * i_q
        ) / p[SGP_TQOPP]

        pe = (sg_x[k, SGX_EDPP] * i_d + sg_x[k, SGX_EQPP] * i_q
              + (xqpp - xdpp) * i_d * i_q)
        dx_sg[k, SGX_OMEGA] = (pm / omega - pe / omega - p[SGP_D] * dev) / p[SGP_TJ]
        dx_sg[k, SGX_DELTA] = omega_b * dev

    n_df = dfig_x.shape[0]
    for k in range(n_df):
        p = dfig_par[k]
        vb = v[dfig_bus[k]]
        vmag = np.abs(vb)
        zs = p[DFP_RS] + 1j * p[DFP_XP]
        e = dfig_x[k, DFX_ED] + 1j * dfig_x[k, DFX_EQ]
        i_s = (e - vb) / zs
        ids = i_s.real
        iqs = i_s.imag

        lm = p[DFP_LM]
        lrr = lm + p[DFP_LR]
        kc = lm / lrr
        i_dr = dfig_x[k, DFX_EQ] / lm + kc * ids
        i_qr = -dfig_x[k, DFX_ED] / lm + kc * iqs

        cb = crowbar[k] != 0
        if cb:
            v_dr = 0.0
            v_qr = 0.0
            err_d = 0.0
            err_q = 0.0
            to_eff = p[DFP_TO] / p[DFP_CBFACT]
        else:
            to_eff = p[DFP_TO]
            q_cmd = p[DFP_QREF] + p[DFP_KQV] * (p[DFP_VSET] - vmag)
            p_cmd = (p[DFP_PREF]
                     + p[DFP_KSPD] * (dfig_x[k, DFX_WR] - p[DFP_WREF]))
            vg = max(vmag, 1e-3)
            ip = p_cmd / vg
            iq = q_cmd / vg
            imax = p[DFP_IMAX]
            if vmag < p[DFP_VQPRI]:
                iq_l = min(max(iq, -imax), imax)
                head = np.sqrt(max(imax * imax - iq_l * iq_l, 0.0))
                ip_l = min(max(ip, -head), head)
            else:
                ip_l = min(max(ip, -imax), imax)
                head = np.sqrt(max(imax * imax - ip_l * ip_l, 0.0))
                iq_l = min(max(iq, -head), head)
            s_target = (ip_l + 1j * iq_l) * vg
            vsafe = vb if vmag >= 1e-6 else 1.0 + 0.0j
            i_target = np.conj(s_target / vsafe)
            e_target = vb + zs * i_target
            err_d = e_target.real - dfig_x[k, DFX_ED]
            err_q = e_target.imag - dfig_x[k, DFX_EQ]
            slip_ff = 1.0 - dfig_x[k, DFX_WR]
            v_qr = slip_ff * dfig_x[k, DFX_EQ] / kc - (p[DFP_KP] * err_d + dfig_x[k, DFX_XID])
            v_dr = slip_ff * dfig_x[k, DFX_ED] / kc + p[DFP_KP] * err_q + dfig_x[k, DFX_XIQ]

        xx = p[DFP_X] - p[DFP_XP]
        slip = 1.0 - dfig_x[k, DFX_WR]
        dx_df[k, DFX_ED] = (
            -(dfig_x[k, DFX_ED] - xx * iqs) / to_eff
            + omega_b * slip * dfig_x[k, DFX_EQ] - omega_b * kc * v_qr
        )
        dx_df[k, DFX_EQ] = (
            -(dfig_x[k, DFX_EQ] + xx * ids) / to_eff
            - omega_b * slip * dfig_x[k, DFX_ED] + omega_b * kc * v_dr
        )
        te = dfig_x[k, DFX_ED] * ids + dfig_x[k, DFX_EQ] * iqs
        tw = (p[DFP_KTW] * dfig_x[k, DFX_THTW]
              + p[DFP_DTW] * (dfig_x[k, DFX_WT] - dfig_x[k, DFX_WR]))
        dx_df[k, DFX_WR] = (tw - te) / (2.0 * p[DFP_HG])
        dx_df[k, DFX_WT] = (p[DFP_TM] - tw) / (2.0 * p[DFP_HT])
        dx_df[k, DFX_THTW] = omega_b * (dfig_x[k, DFX_WT] - dfig_x[k, DFX_WR])
        dx_df[k, DFX_XID] = p[DFP_KI] * err_d
        dx_df[k, DFX_XIQ] = p[DFP_KI] * err_q

        p_rotor = v_dr * i_dr + v_qr * i_qr
        p_gsc = -p_rotor
        s_stator = vb * np.conj(i_s)
        df_p[k] = s_stator.real + p_gsc
        df_q[k] = s_stator.imag
        vsafe2 = vb if vmag >= 1e-6 else 1.0 + 0.0j
        inj[dfig_bus[k]] += (i_s + p_gsc / np.conj(vsafe2)) * p[DFP_SRATIO] \
            + dfig_yn[k] * vb


@njit(cache=True)
def _clamp_sg(sg_par, sg_x):
    for k in range(sg_x.shape[0]):
        sg_x[k, SGX_GOV1] = min(max(sg_x[k, SGX_GOV1], sg_par[k, SGP_GOV_VMIN]),
                                sg_par[k, SGP_GOV_VMAX])
        sg_x[k, SGX_VR] = min(max(sg_x[k, SGX_VR], sg_par[k, SGP_EXC_VRMIN]),
                              sg_par[k, SGP_EXC_VRMAX])


@njit(cache=True)
def _solve_algebraic(omega_b, sg_par, sg_bus, sg_yn, sg_x, dx_sg,
                     dfig_par, dfig_bus, dfig_yn, dfig_x, dx_df, crowbar,
                     v, inj, df_p, df_q, yinv):
    """Fixed-point network solve at frozen states; returns final voltage change."""
    dv = 1.0
    for _ in range(MAX_SWEEPS):
        _eval(omega_b, sg_par, sg_bus, sg_yn, sg_x, dx_sg,
              dfig_par, dfig_bus, dfig_yn, dfig_x, dx_df, crowbar,
              v, inj, df_p, df_q)
        v_new = yinv @ inj
        dv = 0.0
        for i in range(v.shape[0]):
            m = np.abs(v_new[i] - v[i])
            if m > dv:
                dv = m
        v[:] = v_new
        if dv < TOL_V:
            break
    return dv


@njit(cache=True)
def integrate(dt, nt, k_apply, k_clear, omega_b,
              yinv_pre, yinv_flt, yinv_post, post_valid,
              sg_par, sg_bus, sg_yn,
              dfig_par, dfig_bus, dfig_yn,
              sg_x, dfig_x, crowbar, v,
              nb, fault_pos, max_spread_rad,
              delta_out, freq_out, v_out, dfspd_out, dfp_out, dfq_out, vfault_out):
    """Run the full time loop. Returns (status, n_valid, diverged_step)."""
    n_sg = sg_x.shape[0]
    n_df = dfig_x.shape[0]
    n_net = v.shape[0]
    dx_sg = np.zeros_like(sg_x)
    dx_df = np.zeros_like(dfig_x)
    f0_sg = np.zeros_like(sg_x)
    f0_df = np.zeros_like(dfig_x)
    xg_sg = np.zeros_like(sg_x)
    xg_df = np.zeros_like(dfig_x)
    inj = np.zeros(n_net, dtype=np.complex128)
    df_p = np.zeros(n_df)
    df_q = np.zeros(n_df)

    # linear self-coefficients of every state's own derivative
    sg_a = np.zeros_like(sg_x)
    for j in range(n_sg):
        p = sg_par[j]
        det_j = p[SGP_RA] * p[SGP_RA] + p[SGP_XDPP] * p[SGP_XQPP]
        sg_a[j, SGX_OMEGA] = -p[SGP_D] / p[SGP_TJ]
        sg_a[j, SGX_EQP] = -1.0 / p[SGP_TDOP]
        sg_a[j, SGX_EDP] = -1.0 / p[SGP_TQOP]
        sg_a[j, SGX_EQPP] = (-1.0 - (p[SGP_XDP] - p[SGP_XDPP])
                             * p[SGP_XQPP] / det_j) / p[SGP_TDOPP]
        sg_a[j, SGX_EDPP] = (-1.0 - (p[SGP_XQP] - p[SGP_XQPP])
                             * p[SGP_XDPP] / det_j) / p[SGP_TQOPP]
        sg_a[j, SGX_GOV1] = -1.0 / p[SGP_GOV_T1]
        sg_a[j, SGX_GOV2] = -1.0 / p[SGP_GOV_T3]
        sg_a[j, SGX_VM] = -1.0 / p[SGP_EXC_TR]
        sg_a[j, SGX_VR] = -1.0 / p[SGP_EXC_TA]
        sg_a[j, SGX_EFD] = -p[SGP_EXC_KE] / p[SGP_EXC_TE]
        sg_a[j, SGX_XF] = -1.0 / p[SGP_EXC_TF]
        sg_a[j, SGX_PSSW] = -1.0 / p[SGP_PSS_TW]
        sg_a[j, SGX_PSS1] = -1.0 / p[SGP_PSS_T2]
        sg_a[j, SGX_PSS2] = -1.0 / p[SGP_PSS_T4]
    dfig_a = np.zeros_like(dfig_x)
    for j in range(n_df):
        p = dfig_par[j]
        wim_j = p[DFP_XP] / (p[DFP_RS] * p[DFP_RS] + p[DFP_XP] * p[DFP_XP])
        k_cur = 1.0 + (p[DFP_X] - p[DFP_XP]) * wim_j
        dfig_a[j, DFX_ED] = -k_cur / p[DFP_TO]
        dfig_a[j, DFX_EQ] = -k_cur / p[DFP_TO]
        dfig_a[j, DFX_WR] = -p[DFP_DTW] / (2.0 * p[DFP_HG])
        dfig_a[j, DFX_WT] = -p[DFP_DTW] / (2.0 * p[DFP_HT])

    phase_prev = -1
    yinv = yinv_pre
    for k in range(nt):
        if k_apply < 0 or k < k_apply:
            phase = 0
        elif k < k_clear:
            phase = 1
        else:
            phase = 2
        if phase != phase_prev:
            if phase == 0:
                yinv = yinv_pre
            elif phase == 1:
                yinv = yinv_flt
            else:
                if not post_valid:
                    return STATUS_NETWORK_FAILURE, k, k
                yinv = yinv_post
            _solve_algebraic(omega_b, sg_par, sg_bus, sg_yn, sg_x, dx_sg,
                             dfig_par, dfig_bus, dfig_yn, dfig_x, dx_df, crowbar,
                             v, inj, df_p, df_q, yinv)
            ok = True
            for i in range(n_net):
                if not (np.isfinite(v[i].real) and np.isfinite(v[i].imag)):
                    ok = False
            if not ok:
                return STATUS_NETWORK_FAILURE, k, k
            phase_prev = phase

        # crowbar supervision at the step boundary
        for j in range(n_df):
            vm = np.abs(v[dfig_bus[j]])
            if crowbar[j] == 0:
                if vm < dfig_par[j, DFP_VCBON]:
                    crowbar[j] = 1
            else:
                if vm > dfig_par[j, DFP_VCBOFF]:
                    crowbar[j] = 0

        # evaluate at the accepted point: recording outputs + step slopes
        _eval(omega_b, sg_par, sg_bus, sg_yn, sg_x, f0_sg,
              dfig_par, dfig_bus, dfig_yn, dfig_x, f0_df, crowbar,
              v, inj, df_p, df_q)
        for j in range(n_sg):
            delta_out[k, j] = sg_x[j, SGX_DELTA]
            freq_out[k, j] = sg_x[j, SGX_OMEGA]
        for i in range(nb):
            v_out[k, i] = np.abs(v[i])
        for j in range(n_df):
            dfspd_out[k, j] = dfig_x[j, DFX_WR]
            dfp_out[k, j] = df_p[j]
            dfq_out[k, j] = df_q[j]
        vfault_out[k] = np.abs(v[fault_pos]) if fault_pos >= 0 else 0.0

        if k == nt - 1:
            break

        # trapezoidal step with joint state/network sweeps
        for j in range(n_sg):
            for c in range(sg_x.shape[1]):
                xg_sg[j, c] = sg_x[j, c] + dt * f0_sg[j, c]
        for j in range(n_df):
            for c in range(dfig_x.shape[1]):
                xg_df[j, c] = dfig_x[j, c] + dt * f0_df[j, c]
        _clamp_sg(sg_par, xg_sg)

        # each state's linear self-term is solved exactly inside the sweep
        # (same trapezoidal fixed point, but stiff lags stop limiting the
        # contraction rate)
        for sweep in range(MAX_SWEEPS):
            _eval(omega_b, sg_par, sg_bus, sg_yn, xg_sg, dx_sg,
                  dfig_par, dfig_bus, dfig_yn, xg_df, dx_df, crowbar,
                  v, inj, df_p, df_q)
            v_new = yinv @ inj
            dv = 0.0
            for i in range(n_net):
                m = np.abs(v_new[i] - v[i])
                if m > dv:
                    dv = m
            v[:] = v_new
            dx = 0.0
            for j in range(n_sg):
                for c in range(sg_x.shape[1]):
                    if c == SGX_DELTA:
                        continue
                    a = sg_a[j, c]
                    xn = (sg_x[j, c]
                          + 0.5 * dt * (f0_sg[j, c] + dx_sg[j, c] - a * xg_sg[j, c])
                          ) / (1.0 - 0.5 * dt * a)
                    m = abs(xn - xg_sg[j, c])
                    if m > dx:
                        dx = m
                    xg_sg[j, c] = xn
                # angle integrates the freshly solved speed (removes the
                # one-sweep lag that otherwise dominates the contraction)
                xn = sg_x[j, SGX_DELTA] + 0.5 * dt * (
                    f0_sg[j, SGX_DELTA] + omega_b * (xg_sg[j, SGX_OMEGA] - 1.0))
                m = abs(xn - xg_sg[j, SGX_DELTA])
                if m > dx:
                    dx = m
                xg_sg[j, SGX_DELTA] = xn
            _clamp_sg(sg_par, xg_sg)
            for j in range(n_df):
                cb_fact = dfig_par[j, DFP_CBFACT] if crowbar[j] != 0 else 1.0
                for c in range(dfig_x.shape[1]):
                    if c == DFX_THTW:
                        continue
                    a = dfig_a[j, c]
                    if c == DFX_ED or c == DFX_EQ:
                        a = a * cb_fact
                    xn = (dfig_x[j, c]
                          + 0.5 * dt * (f0_df[j, c] + dx_df[j, c] - a * xg_df[j, c])
                          ) / (1.0 - 0.5 * dt * a)
                    m = abs(xn - xg_df[j, c])
                    if m > dx:
                        dx = m
                    xg_df[j, c] = xn
                xn = dfig_x[j, DFX_THTW] + 0.5 * dt * (
                    f0_df[j, DFX_THTW]
                    + omega_b * (xg_df[j, DFX_WT] - xg_df[j, DFX_WR]))
                m = abs(xn - xg_df[j, DFX_THTW])
                if m > dx:
                    dx = m
                xg_df[j, DFX_THTW] = xn
            if dv < TOL_V and dx < TOL_X:
                break

        sg_x[:, :] = xg_sg
        dfig_x[:, :] = xg_df

        # divergence supervision
        ok = True
        for j in range(n_sg):
            for c in range(sg_x.shape[1]):
                if not np.isfinite(sg_x[j, c]):
                    ok = False
        for j in range(n_df):
            for c in range(dfig_x.shape[1]):
                if not np.isfinite(dfig_x[j, c]):
                    ok = False
        for i in range(n_net):
            if not (np.isfinite(v[i].real) and np.isfinite(v[i].imag)):
                ok = False
        if not ok:
            return STATUS_STATE_NONFINITE, k + 1, k + 1
        if n_sg >= 2:
            dmin = sg_x[0, SGX_DELTA]
            dmax = dmin
            for j in range(1, n_sg):
                d = sg_x[j, SGX_DELTA]
                if d < dmin:
                    dmin = d
                if d > dmax:
                    dmax = d
            if dmax - dmin > max_spread_rad:
                for j in range(n_sg):
                    delta_out[k + 1, j] = sg_x[j, SGX_DELTA]
                    freq_out[k + 1, j] = sg_x[j, SGX_OMEGA]
                for i in range(nb):
                    v_out[k + 1, i] = np.abs(v[i])
                for j in range(n_df):
                    dfspd_out[k + 1, j] = dfig_x[j, DFX_WR]
                    dfp_out[k + 1, j] = df_p[j]
                    dfq_out[k + 1, j] = df_q[j]
                vfault_out[k + 1] = np.abs(v[fault_pos]) if fault_pos >= 0 else 0.0
                return STATUS_ANGLE_SEPARATION, k + 2, k + 1

    return STATUS_COMPLETED, nt, -1

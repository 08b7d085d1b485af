"""Time-domain simulation driver: topology staging, events, trajectory assembly.

A run builds up to three network matrices (pre-fault on the split line, faulted
with the equivalent shunt, post-clearing with or without the line tripped),
pre-inverts them, initializes every machine on the base operating point and
hands the arrays to the compiled integrator. Runs are self-contained; many can
execute concurrently on shared read-only cases.
"""

from __future__ import annotations

import numpy as np

from ..errors import InitializationError, SimulationSetupError
from ..netmodel import PowerSystemCase, build_ybus, drop_branches, split_line_at
from ..powerflow import PowerFlowSolution
from .faults import fault_shunt_admittance, sequence_thevenins
from .machines import DynamicState, SimModel, assemble, initialize
from .trajectory import COMPLETED, DIVERGED, FaultEvent, Trajectory

MAX_ANGLE_SPREAD_DEG = 1000.0
INIT_RESIDUAL_TOL = 1e-8

_DIVERGED_REASONS = {
    1: "non-finite state",
    2: f"synchronous-machine angle separation exceeded {MAX_ANGLE_SPREAD_DEG:.0f} deg",
    3: "network algebraic solve failed (islanded or singular)",
}


def init_dynamics(case: PowerSystemCase, pf: PowerFlowSolution,
                  model: SimModel | None = None) -> DynamicState:
    """Initialize all dynamic states from a converged power flow.

    Every differential equation's residual must vanish (below 1e-8) at t=0;
    anything larger means the operating point cannot be held and raises.
    """
    if not pf.converged:
        raise InitializationError("power flow did not converge; cannot initialize")
    state = initialize(case, pf, model)
    if state.max_residual > INIT_RESIDUAL_TOL:
        raise InitializationError(
            f"initialization residual {state.max_residual:.3e} exceeds "
            f"{INIT_RESIDUAL_TOL:.0e}; operating point cannot be held"
        )
    return state


def _step_index(offset: float, dt: float, what: str) -> int:
    steps = offset / dt
    k = round(steps)
    if abs(steps - k) > 1e-6:
        raise SimulationSetupError(
            f"dt={dt} does not divide {what}={offset} (events must land on grid points)"
        )
    return int(k)


def _augment_with_machines(y: np.ndarray, model: SimModel) -> np.ndarray:
    for k in range(model.sg_par.shape[0]):
        y[model.sg_bus[k], model.sg_bus[k]] += model.sg_ynorton[k]
    for k in range(model.dfig_par.shape[0]):
        y[model.dfig_bus[k], model.dfig_bus[k]] += model.dfig_ynorton[k]
    return y


def _invert(y: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        yinv = np.linalg.inv(y)
    except np.linalg.LinAlgError:
        return np.zeros_like(y), False
    if not np.all(np.isfinite(yinv)):
        return np.zeros_like(y), False
    return yinv, True


def run_simulation(
    case: PowerSystemCase,
    pf: PowerFlowSolution,
    fault: FaultEvent | None = None,
    t_end: float = 10.0,
    dt: float = 0.005,
    init_state: DynamicState | None = None,
) -> Trajectory:
    """Simulate ``t_end`` seconds, optionally applying and clearing one fault.

    Fault application adds the equivalent shunt at the split-line fault bus on a
    grid point; clearing removes it and, when ``fault.trip_line`` is set, removes
    both line sections. Numerical divergence terminates the run with channels
    kept up to the divergence instant.
    """
    if dt <= 0.0:
        raise SimulationSetupError("dt must be > 0")
    if t_end <= 0.0:
        raise SimulationSetupError("t_end must be > 0")
    nt = _step_index(t_end, dt, "t_end") + 1

    if init_state is None:
        init_state = init_dynamics(case, pf)
    model = init_state.model
    nb = case.n_bus

    if fault is not None:
        if not (fault.t_clear > fault.t_apply):
            raise SimulationSetupError("fault must satisfy t_clear > t_apply")
        if t_end < fault.t_clear:
            raise SimulationSetupError(
                f"t_end={t_end} must cover the fault clearing at {fault.t_clear}"
            )
        k_apply = _step_index(fault.t_apply, dt, "t_apply")
        k_clear = _step_index(fault.t_clear - fault.t_apply, dt, "fault duration") + k_apply
        if k_clear == k_apply:
            raise SimulationSetupError("fault duration is shorter than one time step")

        split = split_line_at(case, fault.line, fault.location_pct)
        fault_pos = split.bus_index(split.split.fault_bus)
        vmag_ext = np.concatenate([pf.v_mag, [1.0]])

        y_pre = _augment_with_machines(
            build_ybus(split, loads_as_shunts=True, pf_voltages=vmag_ext).toarray(), model
        )
        z1, z2, z0 = sequence_thevenins(split, model, vmag_ext, fault_pos)
        y_shunt = fault_shunt_admittance(fault.fault_type, z1, z2, z0)
        y_flt = y_pre.copy()
        y_flt[fault_pos, fault_pos] += y_shunt

        if fault.trip_line:
            tripped = drop_branches(split, split.split.section_ids)
            y_post = _augment_with_machines(
                build_ybus(tripped, loads_as_shunts=True, pf_voltages=vmag_ext).toarray(),
                model,
            )
            # the fault bus is dangling after the trip: pin its voltage to zero
            y_post[fault_pos, :] = 0.0
            y_post[:, fault_pos] = 0.0
            y_post[fault_pos, fault_pos] = 1.0
        else:
            y_post = y_pre

        yinv_pre, ok_pre = _invert(y_pre)
        yinv_flt, ok_flt = _invert(y_flt)
        yinv_post, post_valid = _invert(y_post)
        if not (ok_pre and ok_flt):
            raise SimulationSetupError("pre-fault network matrix is singular")

        vf_guess = 0.5 * (
            pf.v_complex[case.bus_index(case.branch(fault.line).from_bus)]
            + pf.v_complex[case.bus_index(case.branch(fault.line).to_bus)]
        )
        v0 = np.concatenate([pf.v_complex, [vf_guess]])
        t_apply_meta, t_clear_meta = fault.t_apply, fault.t_clear
    else:
        k_apply = k_clear = -1
        fault_pos = -1
        y_pre = _augment_with_machines(
            build_ybus(case, loads_as_shunts=True, pf_voltages=pf.v_mag).toarray(), model
        )
        yinv_pre, ok_pre = _invert(y_pre)
        if not ok_pre:
            raise SimulationSetupError("network matrix is singular")
        yinv_flt = yinv_post = yinv_pre
        post_valid = True
        v0 = pf.v_complex.copy()
        t_apply_meta = t_clear_meta = None

    n_sg = len(model.sg_names)
    n_df = len(model.dfig_names)
    delta_out = np.zeros((nt, n_sg))
    freq_out = np.zeros((nt, n_sg))
    v_out = np.zeros((nt, nb))
    dfspd_out = np.zeros((nt, n_df))
    dfp_out = np.zeros((nt, n_df))
    dfq_out = np.zeros((nt, n_df))
    vfault_out = np.zeros(nt)

    from ._kernel import integrate  # deferred: numba compile on first use

    status, n_valid, div_step = integrate(
        float(dt), int(nt), int(k_apply), int(k_clear), float(model.omega_b),
        yinv_pre, yinv_flt, yinv_post, bool(post_valid),
        model.sg_par, model.sg_bus, model.sg_ynorton,
        model.dfig_par, model.dfig_bus, model.dfig_ynorton,
        init_state.sg_x.copy(), init_state.dfig_x.copy(),
        init_state.crowbar.copy(), v0.astype(complex).copy(),
        int(nb), int(fault_pos), float(np.radians(MAX_ANGLE_SPREAD_DEG)),
        delta_out, freq_out, v_out, dfspd_out, dfp_out, dfq_out, vfault_out,
    )

    n_valid = max(int(n_valid), 1)
    t = np.arange(nt) * dt
    diverged = status != 0
    return Trajectory(
        t=t[:n_valid],
        sg_names=model.sg_names,
        delta_deg=np.degrees(delta_out[:n_valid]),
        freq_hz=freq_out[:n_valid] * case.nominal_hz,
        bus_ids=tuple(b.id for b in case.buses),
        v_mag=v_out[:n_valid],
        dfig_names=model.dfig_names,
        dfig_speed=dfspd_out[:n_valid],
        dfig_p=dfp_out[:n_valid],
        dfig_q=dfq_out[:n_valid],
        termination=DIVERGED if diverged else COMPLETED,
        nominal_hz=case.nominal_hz,
        t_apply=t_apply_meta,
        t_clear=t_clear_meta,
        diverged_at=float(div_step) * dt if diverged else None,
        diverged_reason=_DIVERGED_REASONS.get(status) if diverged else None,
        fault_bus_v=vfault_out[:n_valid] if fault is not None else None,
    )

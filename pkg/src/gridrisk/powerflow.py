"""Newton-Raphson AC power flow.

Produces the pre-fault operating point used to initialize dynamics. Polar-form
Jacobian, sparse LU per iteration, flat start by default. Pure function of its
inputs; concurrent solves on distinct cases are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PowerFlowError
from .netmodel import PowerSystemCase, build_ybus

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 20


@dataclass(frozen=True)
class PowerFlowSolution:
    """Solved operating point, arrays in case bus order."""

    v_mag: np.ndarray
    v_ang: np.ndarray          # radians, slack at 0
    p_inj: np.ndarray          # net pu injection per bus
    q_inj: np.ndarray
    iterations: int
    max_mismatch: float
    converged: bool

    @property
    def v_complex(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


def _bus_types(case: PowerSystemCase):
    """Return (slack position, PV positions, PQ positions)."""
    gen_buses = {case.bus_index(g.bus) for g in case.generators}
    slack = None
    pv, pq = [], []
    for i, b in enumerate(case.buses):
        if b.kind == "slack":
            slack = i
        elif b.kind == "PV" and i in gen_buses:
            pv.append(i)
        else:
            pq.append(i)
    if slack is None:
        raise PowerFlowError("case has no slack bus")
    return slack, np.array(pv, dtype=int), np.array(pq, dtype=int)


def scheduled_injections(case: PowerSystemCase) -> np.ndarray:
    """Complex scheduled injection per bus (generation minus load), pu."""
    s = np.zeros(case.n_bus, dtype=complex)
    for g in case.generators:
        s[case.bus_index(g.bus)] += g.p_dispatch_mw / case.system_mva_base
    for ld in case.loads:
        s[case.bus_index(ld.bus)] -= complex(ld.p_mw, ld.q_mvar) / case.system_mva_base
    return s


def _injected_power(ybus: sp.spmatrix, v: np.ndarray) -> np.ndarray:
    return v * np.conj(ybus @ v)


def solve_power_flow(
    case: PowerSystemCase,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    flat_start: bool = True,
    v0: np.ndarray | None = None,
) -> PowerFlowSolution:
    """Solve the AC power flow to ``tol`` pu mismatch.

    Raises :class:`PowerFlowError` on non-convergence (naming the worst-mismatch
    bus) or on a singular Jacobian (naming the iteration).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    ybus = build_ybus(case)
    n = case.n_bus
    slack, pv, pq = _bus_types(case)
    s_sched = scheduled_injections(case)

    vm = np.ones(n)
    va = np.zeros(n)
    if not flat_start and v0 is not None:
        vm = np.abs(np.asarray(v0, dtype=complex))
        va = np.angle(np.asarray(v0, dtype=complex))
    for i, b in enumerate(case.buses):
        if b.kind in ("slack", "PV") and b.v_setpoint is not None:
            vm[i] = b.v_setpoint

    ang_idx = np.array([i for i in range(n) if i != slack], dtype=int)
    ang_pos = {b: k for k, b in enumerate(ang_idx)}
    vm_pos = {b: k for k, b in enumerate(pq)}

    def mismatch(v):
        s = _injected_power(ybus, v)
        dp = s_sched.real[ang_idx] - s.real[ang_idx]
        dq = s_sched.imag[pq] - s.imag[pq]
        return np.concatenate([dp, dq]), s

    v = vm * np.exp(1j * va)
    f, _ = mismatch(v)
    it = 0
    while True:
        if not np.all(np.isfinite(f)):
            raise PowerFlowError(
                f"power flow diverged (non-finite mismatch) at iteration {it}"
            )
        worst = float(np.max(np.abs(f))) if f.size else 0.0
        if worst <= tol:
            return _solution(case, ybus, vm, va, it, tol)
        if it >= max_iter:
            bus_id = _worst_bus(case, f, ang_idx, pq)
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations "
                f"(worst mismatch {worst:.3e} pu at bus {bus_id})"
            )
        jac = _jacobian(ybus, vm, va, ang_idx, pq)
        try:
            lu = spla.splu(jac.tocsc())
            dx = lu.solve(f)
        except RuntimeError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration {it}: {exc}") from exc
        if not np.all(np.isfinite(dx)):
            raise PowerFlowError(f"singular Jacobian at iteration {it}")
        va[ang_idx] += dx[: ang_idx.size]
        vm[pq] += dx[ang_idx.size:]
        v = vm * np.exp(1j * va)
        f, _ = mismatch(v)
        it += 1


def _solution(case, ybus, vm, va, it, tol) -> PowerFlowSolution:
    v = vm * np.exp(1j * va)
    s = _injected_power(ybus, v)
    slack, pv, pq = _bus_types(case)
    s_sched = scheduled_injections(case)
    ang_idx = np.array([i for i in range(case.n_bus) if i != slack], dtype=int)
    dp = s_sched.real[ang_idx] - s.real[ang_idx]
    dq = s_sched.imag[pq] - s.imag[pq]
    worst = float(max(np.max(np.abs(dp)) if dp.size else 0.0,
                      np.max(np.abs(dq)) if dq.size else 0.0))
    return PowerFlowSolution(
        v_mag=vm.copy(), v_ang=va.copy(), p_inj=s.real.copy(), q_inj=s.imag.copy(),
        iterations=it, max_mismatch=worst, converged=worst <= tol,
    )


def _jacobian(ybus, vm, va, ang_idx, pq) -> sp.csr_matrix:
    """Polar power-flow Jacobian [[dP/da, dP/dV], [dQ/da, dQ/dV]] (sparse)."""
    v = vm * np.exp(1j * va)
    y = ybus.tocsr()
    ibus = y @ v
    diag_v = sp.diags(v)
    diag_i = sp.diags(ibus)
    diag_vnorm = sp.diags(v / vm)
    dS_dVa = 1j * diag_v @ (diag_i - y @ diag_v).conj()
    dS_dVm = diag_v @ (y @ diag_vnorm).conj() + diag_i.conj() @ diag_vnorm

    j11 = dS_dVa.real[np.ix_(ang_idx, ang_idx)]
    j12 = dS_dVm.real[np.ix_(ang_idx, pq)]
    j21 = dS_dVa.imag[np.ix_(pq, ang_idx)]
    j22 = dS_dVm.imag[np.ix_(pq, pq)]
    return sp.bmat([[sp.csr_matrix(j11), sp.csr_matrix(j12)],
                    [sp.csr_matrix(j21), sp.csr_matrix(j22)]], format="csr")


def _worst_bus(case, f, ang_idx, pq) -> int:
    k = int(np.argmax(np.abs(f)))
    pos = ang_idx[k] if k < ang_idx.size else pq[k - ang_idx.size]
    return case.buses[pos].id


# ---------------------------------------------------------------------------
# Dispatch verification
# ---------------------------------------------------------------------------

@dataclass
class DispatchReport:
    total_generation_mw: float
    total_load_mw: float
    losses_mw: float
    slack_output_mw: float
    slack_rating_mva: float
    warnings: list[str] = field(default_factory=list)

    def format(self) -> str:
        lines = [
            f"total generation : {self.total_generation_mw:10.2f} MW",
            f"total load       : {self.total_load_mw:10.2f} MW",
            f"network losses   : {self.losses_mw:10.2f} MW",
            f"slack output     : {self.slack_output_mw:10.2f} MW "
            f"(rating {self.slack_rating_mva:.2f} MVA)",
        ]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def verify_dispatch(case: PowerSystemCase, solution: PowerFlowSolution) -> DispatchReport:
    """Balance report: generation vs load plus losses, slack loading check."""
    base = case.system_mva_base
    load_mw = case.total_load_mw()
    gen_mw = float(np.sum(solution.p_inj)) * base + load_mw  # injections include loads
    losses = gen_mw - load_mw
    slack = case.slack_bus
    i = case.bus_index(slack.id)
    # generator output at the slack bus = net injection plus local load
    local_load = sum(ld.p_mw for ld in case.loads if ld.bus == slack.id)
    slack_mw = solution.p_inj[i] * base + local_load
    slack_units = [g for g in case.generators if g.bus == slack.id]
    rating = float(sum(g.mva_rating for g in slack_units)) if slack_units else 0.0
    rep = DispatchReport(
        total_generation_mw=gen_mw,
        total_load_mw=load_mw,
        losses_mw=losses,
        slack_output_mw=float(slack_mw),
        slack_rating_mva=rating,
    )
    if rating and slack_mw > rating:
        rep.warnings.append(
            f"slack generator output {slack_mw:.1f} MW exceeds rating {rating:.1f} MVA"
        )
    return rep


def solution_table(case: PowerSystemCase, solution: PowerFlowSolution) -> str:
    """Tabular text export: bus, v_mag, v_ang_deg, p, q (one row per bus)."""
    rows = ["bus,v_mag,v_ang_deg,p_pu,q_pu"]
    for i, b in enumerate(case.buses):
        rows.append(
            f"{b.id},{solution.v_mag[i]:.6f},{np.degrees(solution.v_ang[i]):.6f},"
            f"{solution.p_inj[i]:.6f},{solution.q_inj[i]:.6f}"
        )
    return "\n".join(rows) + "\n"

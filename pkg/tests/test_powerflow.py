"""Newton power flow against the Gauss-Seidel oracle and balance identities."""

import dataclasses

import numpy as np
import pytest

from cases_util import three_bus_case, two_bus_case
from gridrisk.errors import PowerFlowError
from gridrisk.netmodel import Bus, PowerSystemCase
from gridrisk.powerflow import solve_power_flow, solution_table, verify_dispatch
from gridrisk.scenario import scale_load
from oracles import gauss_seidel_power_flow


def test_39bus_converges_quickly(ieee39):
    sol = solve_power_flow(ieee39, tol=1e-6)
    assert sol.converged
    assert sol.iterations <= 10
    assert sol.max_mismatch < 1e-6


def test_39bus_matches_gauss_seidel_oracle(ieee39):
    sol = solve_power_flow(ieee39, tol=1e-6)
    v_gs, _ = gauss_seidel_power_flow(ieee39, tol=1e-6)
    assert np.abs(np.abs(v_gs) - sol.v_mag).max() < 1e-5
    assert np.abs(v_gs - sol.v_complex).max() < 1e-5


def test_three_bus_matches_gauss_seidel_oracle():
    case = three_bus_case()
    sol = solve_power_flow(case, tol=1e-8)
    v_gs, _ = gauss_seidel_power_flow(case, tol=1e-8)
    assert np.abs(v_gs - sol.v_complex).max() < 1e-6


def test_zero_injection_case_is_flat():
    case = two_bus_case(load_mw=0.0, load_mvar=0.0)
    sol = solve_power_flow(case)
    assert sol.iterations == 0
    assert np.allclose(sol.v_ang, 0.0)
    assert np.allclose(sol.v_mag, 1.0)
    assert abs(sol.p_inj).max() < 1e-12


def test_power_balance(ieee39):
    sol = solve_power_flow(ieee39, tol=1e-10, max_iter=40)
    # net injections sum to losses; recompute losses from the admittance matrix
    from gridrisk.netmodel import build_ybus

    y = build_ybus(ieee39).toarray()
    s = sol.v_complex * np.conj(y @ sol.v_complex)
    assert abs(np.sum(sol.p_inj) - np.sum(s.real)) < 1e-8


def test_slack_angle_zero(ieee39_pf, ieee39):
    slack_pos = ieee39.bus_index(ieee39.slack_bus.id)
    assert ieee39_pf.v_ang[slack_pos] == 0.0


def test_pv_buses_hold_setpoint(ieee39, ieee39_pf):
    for g in ieee39.generators:
        i = ieee39.bus_index(g.bus)
        assert ieee39_pf.v_mag[i] == pytest.approx(g.v_setpoint, abs=1e-9)


def test_solution_invariant_under_bus_reordering(ieee39, ieee39_pf):
    perm = list(range(ieee39.n_bus))
    rng = np.random.default_rng(7)
    rng.shuffle(perm)
    permuted = dataclasses.replace(ieee39, buses=tuple(ieee39.buses[i] for i in perm))
    sol = solve_power_flow(permuted, tol=1e-10, max_iter=40)
    for new_pos, old_pos in enumerate(perm):
        assert sol.v_mag[new_pos] == pytest.approx(ieee39_pf.v_mag[old_pos], abs=1e-10)
        assert sol.v_ang[new_pos] == pytest.approx(ieee39_pf.v_ang[old_pos], abs=1e-10)


def test_nonconvergence_names_worst_bus(ieee39):
    with pytest.raises(PowerFlowError, match=r"did not converge.*bus \d+"):
        solve_power_flow(ieee39, tol=1e-15, max_iter=2)


def test_infeasible_case_reports_divergence():
    case = two_bus_case(x=0.5, load_mw=450.0, load_mvar=200.0)  # beyond transfer limit
    with pytest.raises(PowerFlowError):
        solve_power_flow(case, tol=1e-6, max_iter=15)


def test_invalid_tolerance_rejected(ieee39):
    with pytest.raises(ValueError):
        solve_power_flow(ieee39, tol=0.0)


def test_verify_dispatch_balance(ieee39, ieee39_pf):
    rep = verify_dispatch(ieee39, ieee39_pf)
    assert rep.total_load_mw == pytest.approx(6097.1, abs=1e-6)
    assert rep.total_generation_mw == pytest.approx(
        rep.total_load_mw + rep.losses_mw, abs=1e-6
    )
    assert not rep.warnings


def test_verify_dispatch_scaled_load_warns(ieee39):
    scaled = scale_load(ieee39, 1.2)
    sol = solve_power_flow(scaled, tol=1e-8, max_iter=40)
    rep = verify_dispatch(scaled, sol)
    assert rep.slack_output_mw > ieee39.generator("G2").mva_rating
    assert any("exceeds rating" in w for w in rep.warnings)


def test_solution_table_shape(ieee39, ieee39_pf):
    table = solution_table(ieee39, ieee39_pf)
    lines = table.strip().split("\n")
    assert lines[0] == "bus,v_mag,v_ang_deg,p_pu,q_pu"
    assert len(lines) == 40

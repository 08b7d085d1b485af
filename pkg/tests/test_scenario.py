"""Scenario transforms: purity, penetration arithmetic, power-flow invariance."""

import dataclasses

import numpy as np
import pytest

from gridrisk.errors import ScenarioError
from gridrisk.powerflow import solve_power_flow
from gridrisk.scenario import (
    PENETRATION_LEVELS,
    apply_wind_penetration,
    compute_penetration,
    scale_generation,
    scale_load,
)


def test_base_case_zero_penetration(ieee39):
    assert compute_penetration(ieee39) == 0.0


def test_replace_none_is_identity(ieee39):
    derived = apply_wind_penetration(ieee39, [])
    assert derived == ieee39
    assert compute_penetration(derived) == 0.0


@pytest.mark.parametrize("level,expected", [(25, 26.87), (50, 52.73), (80, 82.73)])
def test_table_penetration_levels(ieee39, level, expected):
    derived = apply_wind_penetration(ieee39, PENETRATION_LEVELS[level])
    assert compute_penetration(derived) == pytest.approx(expected, abs=0.05)
    # nominal tier reached within a few percent
    assert abs(compute_penetration(derived) - level) < 3.0


def test_all_wind_is_100_percent(ieee39):
    gens = tuple(
        dataclasses.replace(g, kind="dfig", machine=ieee39.dfig_template,
                            controllers=None)
        for g in ieee39.generators
    )
    allwind = dataclasses.replace(ieee39, generators=gens)
    assert compute_penetration(allwind) == pytest.approx(100.0)


def test_replacement_preserves_unit_footprint(ieee39):
    derived = apply_wind_penetration(ieee39, ("G1", "G3"))
    for name in ("G1", "G3"):
        old = ieee39.generator(name)
        new = derived.generator(name)
        assert new.kind == "dfig"
        assert new.bus == old.bus
        assert new.mva_rating == old.mva_rating
        assert new.p_dispatch_mw == old.p_dispatch_mw
        assert new.v_setpoint == old.v_setpoint
    assert ieee39.generator("G1").kind == "synchronous"  # input untouched


def test_replacement_power_flow_invariance(ieee39, ieee39_pf):
    derived = apply_wind_penetration(ieee39, PENETRATION_LEVELS[50])
    sol = solve_power_flow(derived, tol=1e-10, max_iter=40)
    assert np.abs(sol.v_mag - ieee39_pf.v_mag).max() < 1e-6
    assert np.abs(sol.v_ang - ieee39_pf.v_ang).max() < 1e-6


def test_penetration_nondecreasing_under_inclusion(ieee39):
    sets = [(), ("G1",), ("G1", "G3"), ("G1", "G3", "G5")]
    pens = [compute_penetration(apply_wind_penetration(ieee39, s)) for s in sets]
    assert pens == sorted(pens)


def test_replace_unknown_unit_rejected(ieee39):
    with pytest.raises(ScenarioError, match="unknown generator"):
        apply_wind_penetration(ieee39, ("G99",))


def test_replace_slack_rejected(ieee39):
    with pytest.raises(ScenarioError, match="slack"):
        apply_wind_penetration(ieee39, ("G2",))


def test_replace_must_leave_two_sync_units(ieee39):
    names = tuple(g.name for g in ieee39.generators if g.name != "G2")
    with pytest.raises(ScenarioError, match="at least 2"):
        apply_wind_penetration(ieee39, names)


def test_replace_dfig_twice_rejected(ieee39):
    once = apply_wind_penetration(ieee39, ("G1",))
    with pytest.raises(ScenarioError, match="not synchronous"):
        apply_wind_penetration(once, ("G1",))


# ---------------------------------------------------------------------------
# Generation scaling
# ---------------------------------------------------------------------------

def test_scale_generation_identity(ieee39):
    assert scale_generation(ieee39, 1.0) == ieee39


def test_scale_generation_ratings_only(ieee39, ieee39_pf):
    derived = scale_generation(ieee39, 1.2)
    for g, g0 in zip(derived.generators, ieee39.generators):
        assert g.mva_rating == pytest.approx(1.2 * g0.mva_rating)
        assert g.p_dispatch_mw == g0.p_dispatch_mw
    sol = solve_power_flow(derived, tol=1e-10, max_iter=40)
    assert np.abs(sol.v_mag - ieee39_pf.v_mag).max() < 1e-10


def test_scale_generation_grows_system_inertia(ieee39):
    from gridrisk.dynsim import assemble
    from gridrisk.dynsim.machines import SGP_SRATIO, SGP_TJ

    base = assemble(ieee39)
    scaled = assemble(scale_generation(ieee39, 1.2))
    tj_sys_base = base.sg_par[:, SGP_TJ] * base.sg_par[:, SGP_SRATIO]
    tj_sys_scaled = scaled.sg_par[:, SGP_TJ] * scaled.sg_par[:, SGP_SRATIO]
    assert np.allclose(tj_sys_scaled, 1.2 * tj_sys_base)


def test_scale_generation_below_one_rejected(ieee39):
    with pytest.raises(ScenarioError, match=">= 1"):
        scale_generation(ieee39, 0.9)


# ---------------------------------------------------------------------------
# Load scaling
# ---------------------------------------------------------------------------

def test_scale_load_identity(ieee39):
    assert scale_load(ieee39, 1.0) == ieee39


def test_scale_load_totals(ieee39):
    derived = scale_load(ieee39, 1.1)
    assert derived.total_load_mw() == pytest.approx(6706.81, abs=1e-6)
    assert ieee39.total_load_mw() == pytest.approx(6097.1)  # purity


def test_scale_load_slack_absorbs(ieee39, ieee39_pf):
    from gridrisk.powerflow import verify_dispatch

    derived = scale_load(ieee39, 1.1)
    sol = solve_power_flow(derived, tol=1e-8, max_iter=40)
    rep = verify_dispatch(derived, sol)
    base_rep = verify_dispatch(ieee39, ieee39_pf)
    assert rep.slack_output_mw > base_rep.slack_output_mw + 600.0


def test_scale_load_divergence_names_factor(ieee39):
    with pytest.raises(ScenarioError, match="factor 4.0"):
        scale_load(ieee39, 4.0)


def test_scale_load_invalid_factor(ieee39):
    with pytest.raises(ScenarioError, match="> 0"):
        scale_load(ieee39, 0.0)


# ---------------------------------------------------------------------------
# ScenarioSpec
# ---------------------------------------------------------------------------

def test_scenario_spec_wind(ieee39):
    from gridrisk.scenario import ScenarioSpec

    spec = ScenarioSpec(kind="wind_penetration", replaced=("G1", "G3"),
                        penetration_pct=26.87)
    derived = spec.apply(ieee39)
    assert compute_penetration(derived) == pytest.approx(26.87, abs=0.01)


def test_scenario_spec_checks_stated_penetration(ieee39):
    from gridrisk.scenario import ScenarioSpec

    spec = ScenarioSpec(kind="wind_penetration", replaced=("G1",),
                        penetration_pct=50.0)
    with pytest.raises(ScenarioError, match="not the stated"):
        spec.apply(ieee39)


def test_scenario_spec_scales(ieee39):
    from gridrisk.scenario import ScenarioSpec

    gen = ScenarioSpec(kind="generation_scale", factor=1.1).apply(ieee39)
    assert gen.generators[0].mva_rating == pytest.approx(
        1.1 * ieee39.generators[0].mva_rating)
    load = ScenarioSpec(kind="load_scale", factor=1.05).apply(ieee39)
    assert load.total_load_mw() == pytest.approx(1.05 * 6097.1)
    with pytest.raises(ScenarioError, match="unknown scenario kind"):
        ScenarioSpec(kind="bogus").apply(ieee39)

"""Static data model: validation, Y-bus algebra, line splitting, round-trips."""

import dataclasses
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cases_util import three_bus_case, two_bus_case
from gridrisk.errors import CaseFormatError, CaseValidationError
from gridrisk.netmodel import (
    Branch,
    Bus,
    build_ybus,
    case_from_dict,
    case_to_dict,
    kron_reduce,
    load_case,
    load_shunt_admittances,
    parse_case,
    save_case,
    split_line_at,
    validate_case,
)
from gridrisk.powerflow import solve_power_flow

CASE_PATH = os.path.join(os.path.dirname(__file__), "..", "cases", "ieee39.json")


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------

def test_bundled_case_inventory(ieee39):
    assert ieee39.n_bus == 39
    assert len(ieee39.generators) == 10
    assert len(ieee39.lines) == 34
    assert len(ieee39.branches) - len(ieee39.lines) == 12


def test_bundled_case_total_load(ieee39):
    assert ieee39.total_load_mw() == pytest.approx(6097.1, abs=1e-9)


def test_bundled_case_dispatch_within_capacity(ieee39):
    assert ieee39.total_dispatch_mw() == pytest.approx(6140.81, abs=1e-6)
    assert ieee39.total_dispatch_mw() <= sum(g.mva_rating for g in ieee39.generators)


def test_missing_file_is_format_error(tmp_path):
    with pytest.raises(CaseFormatError, match="cannot read"):
        load_case(str(tmp_path / "nope.json"))


def test_malformed_json_is_format_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CaseFormatError, match="not valid JSON"):
        load_case(str(p))


def test_two_slack_buses_rejected(tmp_path):
    doc = case_to_dict(two_bus_case())
    doc["buses"][1]["kind"] = "slack"
    doc["buses"][1]["v_setpoint"] = 1.0
    p = tmp_path / "twoslack.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(CaseValidationError, match="multiple slack"):
        load_case(str(p))


def test_validation_names_offending_elements():
    case = two_bus_case()
    bad = dataclasses.replace(
        case,
        branches=(Branch(id=1, from_bus=1, to_bus=2, r=0.0, x=0.0),),
    )
    rep = validate_case(bad)
    assert any("branch 1" in e and "reactance" in e for e in rep.errors)


def test_disconnected_graph_rejected():
    case = three_bus_case()
    bad = dataclasses.replace(case, branches=case.branches[:1])  # bus 3 islanded
    rep = validate_case(bad)
    assert any("not connected" in e for e in rep.errors)


def test_sequence_defaults_flagged(ieee39):
    rep = validate_case(ieee39)
    assert rep.ok
    flagged = [w for w in rep.warnings if "sequence impedances defaulted" in w]
    assert len(flagged) == len(ieee39.lines)


def test_dispatch_over_rating_rejected():
    case = two_bus_case()
    g = dataclasses.replace(case.generators[0], p_dispatch_mw=1e4)
    rep = validate_case(dataclasses.replace(case, generators=(g,)))
    assert any("exceeds" in e and "rating" in e for e in rep.errors)


# ---------------------------------------------------------------------------
# Round-trip
# ---------------------------------------------------------------------------

def test_case_round_trip_identical(tmp_path, ieee39):
    p = tmp_path / "roundtrip.json"
    save_case(ieee39, str(p))
    again = load_case(str(p))
    assert again == ieee39


def test_round_trip_with_sequence_data(tmp_path):
    case = two_bus_case()
    br = dataclasses.replace(case.branches[0], z2=complex(0.0, 0.12), z0=complex(0.0, 0.31))
    case = dataclasses.replace(case, branches=(br,))
    p = tmp_path / "seq.json"
    save_case(case, str(p))
    assert parse_case(str(p)) == case


# ---------------------------------------------------------------------------
# Y-bus
# ---------------------------------------------------------------------------

def test_two_bus_ybus_single_line():
    case = two_bus_case(r=0.0, x=0.1)
    y = build_ybus(case).toarray()
    assert y[0, 1] == pytest.approx(10j, abs=1e-12)
    assert y[1, 0] == pytest.approx(10j, abs=1e-12)
    assert y[0, 0] == pytest.approx(-10j, abs=1e-12)
    assert y[1, 1] == pytest.approx(-10j, abs=1e-12)


def test_load_as_shunt_changes_only_its_diagonal():
    case = two_bus_case(load_mw=100.0, load_mvar=30.0)
    y0 = build_ybus(case).toarray()
    y1 = build_ybus(case, loads_as_shunts=True, pf_voltages=np.ones(2)).toarray()
    d = y1 - y0
    assert d[1, 1] == pytest.approx(complex(1.0, -0.3), abs=1e-12)
    d[1, 1] = 0.0
    assert np.abs(d).max() == 0.0


def test_load_shunt_reproduces_power_at_conversion_voltage():
    case = two_bus_case(load_mw=123.0, load_mvar=-45.0)
    v = np.array([1.0, 0.937])
    ysh = load_shunt_admittances(case, v)
    s = (v[1] ** 2) * np.conj(ysh[1]) * case.system_mva_base
    assert s.real == pytest.approx(123.0, abs=1e-9)
    assert s.imag == pytest.approx(-45.0, abs=1e-9)


def test_ybus_deterministic(ieee39):
    a = build_ybus(ieee39)
    b = build_ybus(ieee39)
    assert (a != b).nnz == 0


def test_ybus_symmetric_pattern(ieee39):
    y = build_ybus(ieee39).toarray()
    assert np.abs(y - y.T).max() < 1e-12  # no phase-shifting taps in this case


# ---------------------------------------------------------------------------
# Line splitting
# ---------------------------------------------------------------------------

def test_split_half_impedance(ieee39):
    line = ieee39.lines[0]
    split = split_line_at(ieee39, line.id, 50)
    s1 = split.branch(split.split.section_ids[0])
    s2 = split.branch(split.split.section_ids[1])
    assert s1.x == pytest.approx(0.5 * line.x)
    assert s2.x == pytest.approx(0.5 * line.x)
    assert s1.r + s2.r == pytest.approx(line.r)
    assert split.n_bus == ieee39.n_bus + 1
    assert ieee39.n_bus == 39  # original untouched


def test_split_at_100_keeps_stub(ieee39):
    line = ieee39.lines[3]
    split = split_line_at(ieee39, line.id, 100)
    s1 = split.branch(split.split.section_ids[0])
    assert s1.x >= 0.99 * line.x


def test_split_rejects_transformer(ieee39):
    xfmr = next(b for b in ieee39.branches if not b.is_line)
    with pytest.raises(CaseValidationError, match="transformer"):
        split_line_at(ieee39, xfmr.id, 50)


def test_split_rejects_bad_location(ieee39):
    with pytest.raises(CaseValidationError, match="location_pct"):
        split_line_at(ieee39, ieee39.lines[0].id, 0)


@settings(max_examples=12, deadline=None)
@given(data=st.data())
def test_split_kron_recovers_original(data):
    case = load_case(CASE_PATH)
    line = data.draw(st.sampled_from(sorted(b.id for b in case.lines)))
    loc = data.draw(st.integers(min_value=1, max_value=100))
    split = split_line_at(case, line, loc)
    y_orig = build_ybus(case).toarray()
    y_split = build_ybus(split).toarray()
    y_red = kron_reduce(y_split, [split.bus_index(split.split.fault_bus)])
    assert np.abs(y_red - y_orig).max() < 1e-10


def test_split_power_flow_matches_original(ieee39, ieee39_pf):
    split = split_line_at(ieee39, ieee39.lines[10].id, 37)
    sol = solve_power_flow(split, tol=1e-10, max_iter=40)
    assert np.abs(sol.v_mag[:39] - ieee39_pf.v_mag).max() < 1e-8
    assert np.abs(sol.v_ang[:39] - ieee39_pf.v_ang).max() < 1e-8

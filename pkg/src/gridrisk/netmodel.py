"""Static power-system data model, case ingestion and admittance-matrix algebra.

Cases are immutable after load and safe to share across workers; every transform
(line splitting, scenario edits) returns a new case. All electrical quantities are
per-unit on ``system_mva_base`` except machine parameter blocks, which are on the
owning unit's MVA base. Loads and dispatch are in MW / MVAr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CaseFormatError, CaseValidationError
from .machine_params import (
    ControllerParams,
    DfigParams,
    ExciterParams,
    GovernorParams,
    PssParams,
    SyncMachineParams,
)

BUS_KINDS = ("slack", "PV", "PQ")
FAULT_BUS_NAME = "FAULT"

# Fraction limits for splitting a line: location 100 keeps a 1% stub toward the
# to-bus so neither section degenerates to zero impedance.
_SPLIT_MIN = 0.01
_SPLIT_MAX = 0.99


@dataclass(frozen=True)
class Bus:
    id: int
    name: str
    base_kv: float
    kind: str
    v_setpoint: float | None = None
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    """Pi-model series branch. ``b_charging`` is the total line charging.

    ``z2`` / ``z0`` are negative/zero-sequence series impedances (complex, pu);
    when absent they default to z1 and 3*z1 and the validator flags the default.
    """

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    is_line: bool = True
    z2: complex | None = None
    z0: complex | None = None

    @property
    def z1(self) -> complex:
        return complex(self.r, self.x)

    def z2_effective(self) -> complex:
        return self.z2 if self.z2 is not None else self.z1

    def z0_effective(self) -> complex:
        return self.z0 if self.z0 is not None else 3.0 * self.z1


@dataclass(frozen=True)
class Load:
    """Constant-impedance load; converted to a shunt at the power-flow voltage."""

    bus: int
    p_mw: float
    q_mvar: float


@dataclass(frozen=True)
class GeneratorUnit:
    name: str
    bus: int
    kind: str  # 'synchronous' | 'dfig'
    mva_rating: float
    p_dispatch_mw: float
    v_setpoint: float
    machine: SyncMachineParams | DfigParams
    controllers: ControllerParams | None = None


@dataclass(frozen=True)
class SplitInfo:
    """Bookkeeping attached to a case produced by :func:`split_line_at`."""

    original_line: int
    location_pct: int
    fault_bus: int
    section_ids: tuple[int, int]


@dataclass(frozen=True)
class PowerSystemCase:
    name: str
    system_mva_base: float
    nominal_hz: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    generators: tuple[GeneratorUnit, ...]
    dfig_template: DfigParams | None = None
    split: SplitInfo | None = None
    _bus_pos: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_pos", {b.id: i for i, b in enumerate(self.buses)})

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._bus_pos[bus_id]
        except KeyError:
            raise CaseValidationError(f"unknown bus id {bus_id}") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index(bus_id)]

    def branch(self, branch_id: int) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise CaseValidationError(f"unknown branch id {branch_id}")

    def generator(self, name: str) -> GeneratorUnit:
        for g in self.generators:
            if g.name == name:
                return g
        raise CaseValidationError(f"unknown generator {name!r}")

    @property
    def slack_bus(self) -> Bus:
        for b in self.buses:
            if b.kind == "slack":
                return b
        raise CaseValidationError("case has no slack bus")

    @property
    def lines(self) -> tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.is_line)

    @property
    def sync_generators(self) -> tuple[GeneratorUnit, ...]:
        return tuple(g for g in self.generators if g.kind == "synchronous")

    @property
    def dfig_generators(self) -> tuple[GeneratorUnit, ...]:
        return tuple(g for g in self.generators if g.kind == "dfig")

    def total_load_mw(self) -> float:
        return float(sum(ld.p_mw for ld in self.loads))

    def total_dispatch_mw(self) -> float:
        return float(sum(g.p_dispatch_mw for g in self.generators))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_case(case: PowerSystemCase) -> ValidationReport:
    """Check every structural invariant; errors name the offending element."""
    rep = ValidationReport()
    err = rep.errors.append
    warn = rep.warnings.append

    if case.system_mva_base <= 0:
        err("system_mva_base must be > 0")

    seen_bus = set()
    slack_ids = []
    for b in case.buses:
        if b.id in seen_bus:
            err(f"duplicate bus id {b.id}")
        seen_bus.add(b.id)
        if b.base_kv <= 0:
            err(f"bus {b.id}: base_kv must be > 0")
        if b.kind not in BUS_KINDS:
            err(f"bus {b.id}: unknown kind {b.kind!r}")
        if b.kind == "slack":
            slack_ids.append(b.id)
        if b.kind in ("slack", "PV") and b.v_setpoint is None:
            err(f"bus {b.id}: {b.kind} bus needs a v_setpoint")
    if len(slack_ids) == 0:
        err("case has no slack bus")
    elif len(slack_ids) > 1:
        err(f"case has multiple slack buses: {slack_ids}")

    seen_br = set()
    for br in case.branches:
        if br.id in seen_br:
            err(f"duplicate branch id {br.id}")
        seen_br.add(br.id)
        if br.from_bus == br.to_bus:
            err(f"branch {br.id}: from_bus equals to_bus ({br.from_bus})")
        for end in (br.from_bus, br.to_bus):
            if end not in seen_bus:
                err(f"branch {br.id}: references unknown bus {end}")
        if br.x == 0.0:
            err(f"branch {br.id}: series reactance x must be nonzero")
        if br.tap <= 0.0:
            err(f"branch {br.id}: tap must be > 0")
        if br.is_line and (br.z2 is None or br.z0 is None):
            warn(
                f"line {br.id}: sequence impedances defaulted "
                f"(z2 = z1{', z0 = 3*z1' if br.z0 is None else ''})"
            )

    for ld in case.loads:
        if ld.bus not in seen_bus:
            err(f"load at unknown bus {ld.bus}")

    n_sync = 0
    seen_gen = set()
    for g in case.generators:
        if g.name in seen_gen:
            err(f"duplicate generator name {g.name!r}")
        seen_gen.add(g.name)
        if g.bus not in seen_bus:
            err(f"generator {g.name}: unknown bus {g.bus}")
        if g.kind not in ("synchronous", "dfig"):
            err(f"generator {g.name}: unknown kind {g.kind!r}")
        if g.p_dispatch_mw > g.mva_rating + 1e-9:
            err(
                f"generator {g.name}: dispatch {g.p_dispatch_mw} MW exceeds "
                f"rating {g.mva_rating} MVA"
            )
        try:
            g.machine.validate(f"generator {g.name}")
        except CaseValidationError as exc:
            err(str(exc))
        if g.kind == "synchronous":
            n_sync += 1
            if not isinstance(g.machine, SyncMachineParams):
                err(f"generator {g.name}: synchronous unit needs SyncMachineParams")
            if g.controllers is None:
                err(f"generator {g.name}: synchronous unit needs governor/exciter/PSS blocks")
            else:
                try:
                    g.controllers.validate(f"generator {g.name}")
                except CaseValidationError as exc:
                    err(str(exc))
        else:
            if not isinstance(g.machine, DfigParams):
                err(f"generator {g.name}: dfig unit needs DfigParams")

    if case.buses and not _connected(case):
        err("network graph is not connected")

    cap = sum(g.mva_rating for g in case.generators)
    if case.total_dispatch_mw() > cap + 1e-6:
        err(
            f"total dispatch {case.total_dispatch_mw():.2f} MW exceeds installed "
            f"capacity {cap:.2f} MVA"
        )
    return rep


def _connected(case: PowerSystemCase) -> bool:
    adj: dict[int, list[int]] = {b.id: [] for b in case.buses}
    for br in case.branches:
        if br.from_bus in adj and br.to_bus in adj:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    start = case.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(case.buses)


# ---------------------------------------------------------------------------
# JSON case format
# ---------------------------------------------------------------------------

def _seq_to_json(z: complex | None):
    return None if z is None else [z.real, z.imag]


def _seq_from_json(v) -> complex | None:
    if v is None:
        return None
    return complex(float(v[0]), float(v[1]))


def case_to_dict(case: PowerSystemCase) -> dict:
    d = {
        "name": case.name,
        "system_mva_base": case.system_mva_base,
        "nominal_hz": case.nominal_hz,
        "buses": [
            {
                "id": b.id, "name": b.name, "base_kv": b.base_kv, "kind": b.kind,
                "v_setpoint": b.v_setpoint, "shunt_g": b.shunt_g, "shunt_b": b.shunt_b,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "id": br.id, "from_bus": br.from_bus, "to_bus": br.to_bus,
                "r": br.r, "x": br.x, "b_charging": br.b_charging, "tap": br.tap,
                "is_line": br.is_line,
                "z2": _seq_to_json(br.z2), "z0": _seq_to_json(br.z0),
            }
            for br in case.branches
        ],
        "loads": [{"bus": ld.bus, "p_mw": ld.p_mw, "q_mvar": ld.q_mvar} for ld in case.loads],
        "generators": [_gen_to_dict(g) for g in case.generators],
    }
    if case.dfig_template is not None:
        d["dfig_template"] = vars(case.dfig_template).copy()
    return d


def _gen_to_dict(g: GeneratorUnit) -> dict:
    d = {
        "name": g.name, "bus": g.bus, "kind": g.kind,
        "mva_rating": g.mva_rating, "p_dispatch_mw": g.p_dispatch_mw,
        "v_setpoint": g.v_setpoint,
        "machine": vars(g.machine).copy(),
    }
    if g.controllers is not None:
        d["governor"] = vars(g.controllers.governor).copy()
        d["exciter"] = vars(g.controllers.exciter).copy()
        d["pss"] = vars(g.controllers.pss).copy()
    return d


def _gen_from_dict(d: dict) -> GeneratorUnit:
    kind = d["kind"]
    if kind == "synchronous":
        machine = SyncMachineParams(**d["machine"])
        controllers = ControllerParams(
            governor=GovernorParams(**d["governor"]),
            exciter=ExciterParams(**d["exciter"]),
            pss=PssParams(**d["pss"]),
        )
    elif kind == "dfig":
        machine = DfigParams(**d["machine"])
        controllers = None
    else:
        raise CaseFormatError(f"generator {d.get('name')!r}: unknown kind {kind!r}")
    return GeneratorUnit(
        name=d["name"], bus=int(d["bus"]), kind=kind,
        mva_rating=float(d["mva_rating"]), p_dispatch_mw=float(d["p_dispatch_mw"]),
        v_setpoint=float(d["v_setpoint"]), machine=machine, controllers=controllers,
    )


def case_from_dict(d: dict) -> PowerSystemCase:
    try:
        buses = tuple(
            Bus(
                id=int(b["id"]), name=str(b.get("name", f"Bus {b['id']}")),
                base_kv=float(b["base_kv"]), kind=str(b["kind"]),
                v_setpoint=None if b.get("v_setpoint") is None else float(b["v_setpoint"]),
                shunt_g=float(b.get("shunt_g", 0.0)), shunt_b=float(b.get("shunt_b", 0.0)),
            )
            for b in d["buses"]
        )
        branches = tuple(
            Branch(
                id=int(br["id"]), from_bus=int(br["from_bus"]), to_bus=int(br["to_bus"]),
                r=float(br["r"]), x=float(br["x"]),
                b_charging=float(br.get("b_charging", 0.0)),
                tap=float(br.get("tap", 1.0)), is_line=bool(br.get("is_line", True)),
                z2=_seq_from_json(br.get("z2")), z0=_seq_from_json(br.get("z0")),
            )
            for br in d["branches"]
        )
        loads = tuple(
            Load(bus=int(ld["bus"]), p_mw=float(ld["p_mw"]), q_mvar=float(ld["q_mvar"]))
            for ld in d["loads"]
        )
        generators = tuple(_gen_from_dict(g) for g in d["generators"])
        template = d.get("dfig_template")
        return PowerSystemCase(
            name=str(d.get("name", "case")),
            system_mva_base=float(d["system_mva_base"]),
            nominal_hz=float(d.get("nominal_hz", 60.0)),
            buses=buses, branches=branches, loads=loads, generators=generators,
            dfig_template=None if template is None else DfigParams(**template),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseFormatError(f"malformed case document: {exc}") from exc


def parse_case(path: str) -> PowerSystemCase:
    """Parse a case file without validating invariants."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CaseFormatError(f"cannot read case file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"case file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CaseFormatError(f"case file {path}: top level must be an object")
    return case_from_dict(doc)


def load_case(path: str) -> PowerSystemCase:
    """Parse and fully validate a case file."""
    case = parse_case(path)
    rep = validate_case(case)
    if not rep.ok:
        raise CaseValidationError(
            f"case {case.name!r} failed validation:\n  " + "\n  ".join(rep.errors)
        )
    return case


def save_case(case: PowerSystemCase, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(case_to_dict(case), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Admittance matrix
# ---------------------------------------------------------------------------

def load_shunt_admittances(
    case: PowerSystemCase, pf_voltages: Sequence[float] | np.ndarray
) -> np.ndarray:
    """Per-bus shunt admittance reproducing each load's complex power at |V|.

    ``pf_voltages`` are per-bus voltage magnitudes in case bus order.
    """
    v = np.asarray(pf_voltages, dtype=float)
    if v.shape != (case.n_bus,):
        raise ValueError(f"pf_voltages must have {case.n_bus} entries")
    y = np.zeros(case.n_bus, dtype=complex)
    for ld in case.loads:
        i = case.bus_index(ld.bus)
        s = complex(ld.p_mw, ld.q_mvar) / case.system_mva_base
        y[i] += s.conjugate() / (v[i] ** 2)
    return y


def build_ybus(
    case: PowerSystemCase,
    loads_as_shunts: bool = False,
    pf_voltages: Sequence[float] | np.ndarray | None = None,
    sequence: str = "positive",
) -> sp.csr_matrix:
    """Assemble the nodal admittance matrix (sparse, case bus order).

    ``sequence`` selects which branch impedances are stamped: ``positive`` (z1),
    ``negative`` (z2) or ``zero`` (z0, taps ignored since the zero-sequence network
    is used only to size fault shunts).
    """
    if loads_as_shunts and pf_voltages is None:
        raise ValueError("loads_as_shunts requires pf_voltages")
    n = case.n_bus
    diag = np.zeros(n, dtype=complex)
    rows, cols, vals = [], [], []
    for br in case.branches:
        i = case.bus_index(br.from_bus)
        j = case.bus_index(br.to_bus)
        if sequence == "positive":
            z = br.z1
        elif sequence == "negative":
            z = br.z2_effective()
        elif sequence == "zero":
            z = br.z0_effective()
        else:
            raise ValueError(f"unknown sequence {sequence!r}")
        y = 1.0 / z
        ysh = 0.5j * br.b_charging
        tap = br.tap if sequence != "zero" else 1.0
        diag[i] += (y + ysh) / (tap * tap)
        diag[j] += y + ysh
        rows += [i, j]
        cols += [j, i]
        vals += [-y / tap, -y / tap]
    for b in case.buses:
        diag[case.bus_index(b.id)] += complex(b.shunt_g, b.shunt_b)
    if loads_as_shunts:
        diag += load_shunt_admittances(case, pf_voltages)
    rows += list(range(n))
    cols += list(range(n))
    vals += list(diag)
    return sp.csr_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n)
    )


def kron_reduce(ybus: np.ndarray | sp.spmatrix, eliminate: Iterable[int]) -> np.ndarray:
    """Eliminate the given bus positions: Ykk - Yke * Yee^-1 * Yek (dense result)."""
    y = ybus.toarray() if sp.issparse(ybus) else np.asarray(ybus, dtype=complex)
    elim = sorted(set(int(i) for i in eliminate))
    keep = [i for i in range(y.shape[0]) if i not in elim]
    yee = y[np.ix_(elim, elim)]
    return y[np.ix_(keep, keep)] - y[np.ix_(keep, elim)] @ np.linalg.solve(
        yee, y[np.ix_(elim, keep)]
    )


# ---------------------------------------------------------------------------
# Line splitting
# ---------------------------------------------------------------------------

def split_line_at(case: PowerSystemCase, line_id: int, location_pct: int) -> PowerSystemCase:
    """Replace a line by two series sections joined at a new fault bus.

    The series impedance splits linearly at ``location_pct`` (clamped to [1, 99]%
    so neither section is degenerate; 100 maps to 99). Line charging stays at the
    original end buses, which keeps the split electrically exact: Kron-eliminating
    the fault bus recovers the original Y-bus to rounding error.
    """
    br = case.branch(line_id)
    if not br.is_line:
        raise CaseValidationError(
            f"branch {line_id} is a transformer; faults may only target lines"
        )
    if not (1 <= int(location_pct) <= 100):
        raise CaseValidationError(f"location_pct must be in 1..100, got {location_pct}")
    alpha = min(max(int(location_pct) / 100.0, _SPLIT_MIN), _SPLIT_MAX)

    fault_bus_id = max(b.id for b in case.buses) + 1
    from_bus = case.bus(br.from_bus)
    fault_bus = Bus(
        id=fault_bus_id, name=FAULT_BUS_NAME, base_kv=from_bus.base_kv, kind="PQ"
    )

    max_br = max(b.id for b in case.branches)
    sec1 = Branch(
        id=max_br + 1, from_bus=br.from_bus, to_bus=fault_bus_id,
        r=br.r * alpha, x=br.x * alpha, b_charging=0.0, tap=1.0, is_line=True,
        z2=br.z2_effective() * alpha, z0=br.z0_effective() * alpha,
    )
    sec2 = Branch(
        id=max_br + 2, from_bus=fault_bus_id, to_bus=br.to_bus,
        r=br.r * (1 - alpha), x=br.x * (1 - alpha), b_charging=0.0, tap=1.0, is_line=True,
        z2=br.z2_effective() * (1 - alpha), z0=br.z0_effective() * (1 - alpha),
    )

    # Move the line's end charging onto the terminal buses.
    half_b = 0.5 * br.b_charging
    new_buses = []
    for b in case.buses:
        if b.id in (br.from_bus, br.to_bus) and half_b != 0.0:
            new_buses.append(replace(b, shunt_b=b.shunt_b + half_b))
        else:
            new_buses.append(b)
    new_buses.append(fault_bus)

    new_branches = tuple(b for b in case.branches if b.id != line_id) + (sec1, sec2)
    return PowerSystemCase(
        name=case.name,
        system_mva_base=case.system_mva_base,
        nominal_hz=case.nominal_hz,
        buses=tuple(new_buses),
        branches=new_branches,
        loads=case.loads,
        generators=case.generators,
        split=SplitInfo(
            original_line=line_id,
            location_pct=int(location_pct),
            fault_bus=fault_bus_id,
            section_ids=(sec1.id, sec2.id),
        ),
    )


def drop_branches(case: PowerSystemCase, branch_ids: Iterable[int]) -> PowerSystemCase:
    """Derived case without the given branches (used for post-trip topology)."""
    drop = set(branch_ids)
    return replace(case, branches=tuple(b for b in case.branches if b.id not in drop))

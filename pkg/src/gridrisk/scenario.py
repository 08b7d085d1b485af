"""Case transforms for the study sweeps.

Wind-penetration transforms swap synchronous units for DFIG aggregates with the
same MW dispatch, MVA rating, bus and voltage setpoint, so the power flow of the
derived case matches the base case bus for bus. Generation scaling grows machine
ratings (and with them the inertia and stiffness the machine brings on the
system base) at fixed dispatch; load scaling stresses the operating point. All
transforms are pure: the input case is never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

from .errors import PowerFlowError, ScenarioError
from .machine_params import DfigParams
from .netmodel import GeneratorUnit, PowerSystemCase

# Replacement sets reaching the study's nominal penetration tiers on the
# bundled 39-bus case (computed penetrations: 26.9%, 52.7%, 82.7%).
PENETRATION_LEVELS: dict[int, tuple[str, ...]] = {
    0: (),
    25: ("G1", "G3"),
    50: ("G1", "G3", "G5", "G9", "G10"),
    80: ("G1", "G3", "G4", "G5", "G6", "G7", "G9", "G10"),
}

DEFAULT_DFIG_TEMPLATE = DfigParams(
    h_g=0.9, h_t=4.0, x=3.1, xp=0.178, to=0.82, rs=0.01, lm=3.0, lr=0.08,
    k_tw=0.3, d_tw=1.5, i_max=1.1, v_crowbar_on=0.35, v_crowbar_off=0.5,
    crowbar_r_factor=5.0, kp_e=0.1, ki_e=2.0, kq_v=2.0, v_q_priority=0.9,
    speed_ref=1.2, k_speed=10.0,
)


@dataclass(frozen=True)
class ScenarioSpec:
    """One case transform, as carried by run configurations and CLI flags.

    ``kind`` selects the transform: ``wind_penetration`` (with ``replaced``
    naming the converted units, optionally cross-checked against a stated
    ``penetration_pct``), ``generation_scale`` or ``load_scale`` (with
    ``factor``).
    """

    kind: str
    replaced: tuple[str, ...] = ()
    penetration_pct: float | None = None
    factor: float | None = None

    def apply(self, case: PowerSystemCase) -> PowerSystemCase:
        if self.kind == "wind_penetration":
            derived = apply_wind_penetration(case, self.replaced)
            if self.penetration_pct is not None:
                got = compute_penetration(derived)
                if abs(got - self.penetration_pct) > 1.0:
                    raise ScenarioError(
                        f"replacing {list(self.replaced)} reaches {got:.2f}% "
                        f"penetration, not the stated {self.penetration_pct}%"
                    )
            return derived
        if self.kind == "generation_scale":
            if self.factor is None:
                raise ScenarioError("generation_scale needs a factor")
            return scale_generation(case, self.factor)
        if self.kind == "load_scale":
            if self.factor is None:
                raise ScenarioError("load_scale needs a factor")
            return scale_load(case, self.factor)
        raise ScenarioError(f"unknown scenario kind {self.kind!r}")


def compute_penetration(case: PowerSystemCase) -> float:
    """Wind share of total generation dispatch, percent."""
    total = case.total_dispatch_mw()
    if total <= 0.0:
        raise ScenarioError("case has no generation dispatch")
    wind = sum(g.p_dispatch_mw for g in case.dfig_generators)
    return 100.0 * wind / total


def apply_wind_penetration(
    case: PowerSystemCase, replaced: Iterable[str]
) -> PowerSystemCase:
    """Replace the named synchronous units with DFIG aggregates.

    Each replacement keeps the unit's bus, MW dispatch, MVA rating and terminal
    voltage setpoint (its bus stays PV), so the derived case redispatches
    nothing. Rejected when fewer than two synchronous units would remain: the
    angle index needs a machine pair.
    """
    names = list(replaced)
    units = {g.name: g for g in case.generators}
    for name in names:
        if name not in units:
            raise ScenarioError(f"unknown generator {name!r}")
        if units[name].kind != "synchronous":
            raise ScenarioError(f"generator {name!r} is not synchronous")
    slack_id = case.slack_bus.id
    for name in names:
        if units[name].bus == slack_id:
            raise ScenarioError(
                f"generator {name!r} holds the slack bus and cannot be replaced"
            )
    remaining = sum(
        1 for g in case.generators if g.kind == "synchronous" and g.name not in names
    )
    if remaining < 2:
        raise ScenarioError(
            f"replacing {names} leaves {remaining} synchronous unit(s); "
            "at least 2 must remain for the angle index"
        )
    template = case.dfig_template or DEFAULT_DFIG_TEMPLATE
    new_gens = []
    for g in case.generators:
        if g.name in names:
            new_gens.append(GeneratorUnit(
                name=g.name, bus=g.bus, kind="dfig",
                mva_rating=g.mva_rating, p_dispatch_mw=g.p_dispatch_mw,
                v_setpoint=g.v_setpoint, machine=template, controllers=None,
            ))
        else:
            new_gens.append(g)
    return replace(case, generators=tuple(new_gens))


def scale_generation(case: PowerSystemCase, factor: float) -> PowerSystemCase:
    """Grow every unit's rating (capacity and inertia base) by ``factor``.

    Dispatch stays fixed so the load balance, and hence the power flow, is
    unchanged; the machines simply get stronger and heavier on the system base.
    """
    if factor < 1.0:
        raise ScenarioError(f"generation scale factor must be >= 1, got {factor}")
    if factor == 1.0:
        return case
    new_gens = tuple(
        replace(g, mva_rating=g.mva_rating * factor) for g in case.generators
    )
    return replace(case, generators=new_gens)


def scale_load(case: PowerSystemCase, factor: float) -> PowerSystemCase:
    """Scale every load's P and Q; the slack absorbs the imbalance.

    The scaled case must still carry a solvable power flow; divergence is
    reported against the factor.
    """
    if factor <= 0.0:
        raise ScenarioError(f"load scale factor must be > 0, got {factor}")
    if factor == 1.0:
        return case
    new_loads = tuple(
        replace(ld, p_mw=ld.p_mw * factor, q_mvar=ld.q_mvar * factor)
        for ld in case.loads
    )
    scaled = replace(case, loads=new_loads)
    from .powerflow import solve_power_flow

    try:
        solve_power_flow(scaled)
    except PowerFlowError as exc:
        raise ScenarioError(
            f"power flow diverges at load scale factor {factor}: {exc}"
        ) from exc
    return scaled

"""Shunt-fault equivalents for the positive-sequence network.

An unbalanced shunt fault enters the positive-sequence simulation as an
equivalent admittance at the fault bus, sized from the negative- and
zero-sequence Thevenin impedances seen there: the zero/negative networks in
series (single-line-to-ground), negative alone (line-to-line) or in parallel
(double-line-to-ground). A three-phase fault is bolted and modeled as a large
pure conductance.
"""

from __future__ import annotations

import numpy as np

from ..errors import SimulationSetupError
from ..netmodel import PowerSystemCase, build_ybus
from .machines import SimModel

FAULT_TYPES = ("LLL", "LLG", "LL", "LG")
BOLTED_CONDUCTANCE = 1e6  # pu


def fault_shunt_admittance(fault_type: str, z1: complex, z2: complex, z0: complex) -> complex:
    """Positive-sequence equivalent shunt admittance for a shunt fault."""
    if fault_type == "LLL":
        return complex(BOLTED_CONDUCTANCE, 0.0)
    if abs(z1) == 0.0:
        raise SimulationSetupError(
            f"{fault_type} fault needs a nonzero positive-sequence Thevenin impedance"
        )
    if fault_type == "LG":
        zs = z2 + z0
        if abs(zs) < 1e-12:
            raise SimulationSetupError("degenerate sequence network: z2 + z0 = 0 for LG fault")
        return 1.0 / zs
    if fault_type == "LL":
        if abs(z2) < 1e-12:
            raise SimulationSetupError("degenerate sequence network: z2 = 0 for LL fault")
        return 1.0 / z2
    if fault_type == "LLG":
        if abs(z2) < 1e-12 or abs(z0) < 1e-12 or abs(z2 + z0) < 1e-12:
            raise SimulationSetupError("degenerate sequence network for LLG fault")
        return 1.0 / (z2 * z0 / (z2 + z0))
    raise SimulationSetupError(f"unknown fault type {fault_type!r}")


def sequence_thevenins(
    case: PowerSystemCase,
    model: SimModel,
    v_mag_ext: np.ndarray,
    fault_pos: int,
) -> tuple[complex, complex, complex]:
    """Thevenin impedances (z1, z2, z0) at a bus position of the given case.

    The positive/negative networks carry loads as shunts and machines as their
    subtransient (SG) or transient (DFIG) admittances. The zero-sequence network
    keeps branch z0 and grounded-wye load shunts but no machine paths (step-up
    transformers are taken as blocking); it exists only to size fault shunts.
    """
    def thevenin(y):
        n = y.shape[0]
        e = np.zeros(n, dtype=complex)
        e[fault_pos] = 1.0
        try:
            col = np.linalg.solve(y, e)
        except np.linalg.LinAlgError as exc:
            raise SimulationSetupError(f"singular sequence network: {exc}") from exc
        return col[fault_pos]

    y1 = build_ybus(case, loads_as_shunts=True, pf_voltages=v_mag_ext,
                    sequence="positive").toarray()
    y2 = build_ybus(case, loads_as_shunts=True, pf_voltages=v_mag_ext,
                    sequence="negative").toarray()
    for k in range(model.sg_par.shape[0]):
        y1[model.sg_bus[k], model.sg_bus[k]] += model.sg_ynorton[k]
        y2[model.sg_bus[k], model.sg_bus[k]] += model.sg_ynorton[k]
    for k in range(model.dfig_par.shape[0]):
        y1[model.dfig_bus[k], model.dfig_bus[k]] += model.dfig_ynorton[k]
        y2[model.dfig_bus[k], model.dfig_bus[k]] += model.dfig_ynorton[k]
    y0 = build_ybus(case, loads_as_shunts=True, pf_voltages=v_mag_ext,
                    sequence="zero").toarray()
    return thevenin(y1), thevenin(y2), thevenin(y0)

"""Time-domain simulation result container and export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COMPLETED = "completed"
DIVERGED = "diverged"


@dataclass(frozen=True)
class FaultEvent:
    """One contingency: a shunt fault on a line, cleared after the FCT.

    ``location_pct`` counts from the from-bus. ``t_clear`` is absolute time.
    When ``trip_line`` is set, clearing removes both sections of the split line.
    """

    line: int
    location_pct: int
    fault_type: str            # 'LLL' | 'LLG' | 'LL' | 'LG'
    t_apply: float = 1.0
    t_clear: float = 1.2
    trip_line: bool = True

    @property
    def fct(self) -> float:
        return self.t_clear - self.t_apply


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled channels from one simulation run.

    All 2-D arrays are (n_steps, n_channels). Angles are degrees, frequencies Hz,
    voltages pu. On divergence the arrays are truncated at the last finite step
    and ``termination`` is 'diverged'.
    """

    t: np.ndarray
    sg_names: tuple[str, ...]
    delta_deg: np.ndarray
    freq_hz: np.ndarray
    bus_ids: tuple[int, ...]
    v_mag: np.ndarray
    dfig_names: tuple[str, ...]
    dfig_speed: np.ndarray
    dfig_p: np.ndarray
    dfig_q: np.ndarray
    termination: str
    nominal_hz: float = 60.0
    t_apply: float | None = None
    t_clear: float | None = None
    diverged_at: float | None = None
    diverged_reason: str | None = None
    fault_bus_v: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.termination == DIVERGED

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def column_names(self) -> list[str]:
        cols = ["time_s"]
        cols += [f"delta_deg:{n}" for n in self.sg_names]
        cols += [f"freq_hz:{n}" for n in self.sg_names]
        cols += [f"v_pu:{b}" for b in self.bus_ids]
        for n in self.dfig_names:
            cols += [f"dfig_speed:{n}", f"dfig_p:{n}", f"dfig_q:{n}"]
        if self.fault_bus_v is not None:
            cols.append("v_pu:fault")
        return cols

    def to_table(self) -> str:
        """Tabular text export, one row per time step, deterministic column order."""
        blocks = [self.t[:, None], self.delta_deg, self.freq_hz, self.v_mag]
        for k in range(len(self.dfig_names)):
            blocks += [self.dfig_speed[:, k:k + 1], self.dfig_p[:, k:k + 1],
                       self.dfig_q[:, k:k + 1]]
        if self.fault_bus_v is not None:
            blocks.append(self.fault_bus_v[:, None])
        data = np.hstack(blocks)
        lines = [",".join(self.column_names())]
        for row in data:
            lines.append(",".join(f"{v:.9g}" for v in row))
        return "\n".join(lines) + "\n"

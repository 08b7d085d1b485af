"""Machine and controller parameter blocks.

All per-unit values are on the owning unit's MVA base (``GeneratorUnit.mva_rating``);
time constants are in seconds. Conversions to the system base happen inside the
simulator, never in the data model.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CaseValidationError


@dataclass(frozen=True)
class SyncMachineParams:
    """Electrical/mechanical constants of a 6th-order synchronous machine.

    ``tj`` is the acceleration time constant (2H) in seconds on the machine base;
    ``d`` is damping torque in pu per pu speed deviation.
    """

    tj: float
    d: float
    ra: float
    xd: float
    xq: float
    xdp: float
    xqp: float
    xdpp: float
    xqpp: float
    tdo_p: float
    tqo_p: float
    tdo_pp: float
    tqo_pp: float

    def validate(self, owner: str) -> None:
        if not (self.xd >= self.xdp >= self.xdpp > 0.0):
            raise CaseValidationError(
                f"{owner}: d-axis reactance chain must satisfy xd >= xdp >= xdpp > 0 "
                f"(got {self.xd}, {self.xdp}, {self.xdpp})"
            )
        if not (self.xq >= self.xqp >= self.xqpp > 0.0):
            raise CaseValidationError(
                f"{owner}: q-axis reactance chain must satisfy xq >= xqp >= xqpp > 0 "
                f"(got {self.xq}, {self.xqp}, {self.xqpp})"
            )
        for name in ("tj", "tdo_p", "tqo_p", "tdo_pp", "tqo_pp"):
            if getattr(self, name) <= 0.0:
                raise CaseValidationError(f"{owner}: time constant {name} must be > 0")
        if self.ra < 0.0 or self.d < 0.0:
            raise CaseValidationError(f"{owner}: ra and d must be non-negative")


@dataclass(frozen=True)
class GovernorParams:
    """Steam turbine-governor with droop, valve lag and reheat lead-lag."""

    r: float          # droop, pu speed / pu power (machine base)
    t1: float         # valve servo time constant, s
    t2: float         # reheat lead time constant, s
    t3: float         # reheat lag time constant, s
    dt: float         # frictional damping torque coefficient
    vmax: float       # valve upper limit, pu
    vmin: float       # valve lower limit, pu

    def validate(self, owner: str) -> None:
        if self.r <= 0.0:
            raise CaseValidationError(f"{owner}: governor droop must be > 0")
        if self.t1 <= 0.0 or self.t3 <= 0.0:
            raise CaseValidationError(f"{owner}: governor time constants t1, t3 must be > 0")
        if self.vmin >= self.vmax:
            raise CaseValidationError(f"{owner}: governor limits must satisfy vmin < vmax")


@dataclass(frozen=True)
class ExciterParams:
    """Rotating-exciter AVR: input filter, regulator, exciter and rate feedback."""

    tr: float         # terminal-voltage transducer time constant, s
    ka: float         # regulator gain
    ta: float         # regulator time constant, s
    ke: float         # exciter self-excitation constant
    te: float         # exciter time constant, s
    kf: float         # rate-feedback gain
    tf: float         # rate-feedback time constant, s
    vrmax: float      # regulator ceiling, pu
    vrmin: float      # regulator floor, pu

    def validate(self, owner: str) -> None:
        for name in ("tr", "ta", "te", "tf"):
            if getattr(self, name) <= 0.0:
                raise CaseValidationError(f"{owner}: exciter time constant {name} must be > 0")
        if self.ka <= 0.0:
            raise CaseValidationError(f"{owner}: exciter gain ka must be > 0")
        if self.vrmin >= self.vrmax:
            raise CaseValidationError(f"{owner}: exciter limits must satisfy vrmin < vrmax")


@dataclass(frozen=True)
class PssParams:
    """Speed-input stabilizer: washout plus two lead-lag stages, clamped output."""

    k: float          # gain on pu speed deviation
    tw: float         # washout time constant, s
    t1: float         # first-stage lead, s
    t2: float         # first-stage lag, s
    t3: float         # second-stage lead, s
    t4: float         # second-stage lag, s
    vmax: float       # output clamp (symmetric pair with vmin)
    vmin: float

    def validate(self, owner: str) -> None:
        if self.tw <= 0.0 or self.t2 <= 0.0 or self.t4 <= 0.0:
            raise CaseValidationError(f"{owner}: stabilizer lags tw, t2, t4 must be > 0")
        if self.vmin >= self.vmax:
            raise CaseValidationError(f"{owner}: stabilizer limits must satisfy vmin < vmax")


@dataclass(frozen=True)
class ControllerParams:
    governor: GovernorParams
    exciter: ExciterParams
    pss: PssParams

    def validate(self, owner: str) -> None:
        self.governor.validate(owner)
        self.exciter.validate(owner)
        self.pss.validate(owner)


@dataclass(frozen=True)
class DfigParams:
    """Reduced-order doubly fed induction generator with a two-mass shaft.

    ``x`` / ``xp`` are the open-circuit and short-circuit reactances; ``to`` is the
    transient open-circuit time constant in seconds. ``h_t`` (turbine inertia) closes
    the two-mass shaft model that the generator-side inertia ``h_g`` alone cannot.
    """

    h_g: float        # generator inertia, s
    h_t: float        # turbine inertia, s
    x: float          # open-circuit reactance, pu
    xp: float         # short-circuit (transient) reactance, pu
    to: float         # transient open-circuit time constant, s
    rs: float         # stator resistance, pu
    lm: float         # magnetizing inductance, pu
    lr: float         # rotor leakage inductance, pu
    k_tw: float       # shaft stiffness, pu torque / electrical rad
    d_tw: float       # shaft mutual damping, pu torque / pu speed
    i_max: float      # converter current limit, pu
    v_crowbar_on: float    # crowbar engages below this terminal voltage, pu
    v_crowbar_off: float   # crowbar releases above this terminal voltage, pu
    crowbar_r_factor: float  # rotor-resistance multiplier while crowbarred
    kp_e: float       # converter PI proportional gain (internal-voltage tracking)
    ki_e: float       # converter PI integral gain
    kq_v: float       # reactive droop, pu Q per pu voltage error
    v_q_priority: float    # below this terminal voltage the current limit favours Q
    speed_ref: float  # rotor speed at dispatch output, pu
    k_speed: float = 10.0  # speed-regulation droop on the torque command, pu P / pu speed

    def validate(self, owner: str) -> None:
        if not (self.x > self.xp > 0.0):
            raise CaseValidationError(
                f"{owner}: reactances must satisfy x > xp > 0 (got {self.x}, {self.xp})"
            )
        if self.to <= 0.0:
            raise CaseValidationError(f"{owner}: transient time constant to must be > 0")
        for name in ("h_g", "h_t", "lm", "lr", "k_tw", "i_max"):
            if getattr(self, name) <= 0.0:
                raise CaseValidationError(f"{owner}: {name} must be > 0")
        if not (0.0 < self.v_crowbar_on < self.v_crowbar_off):
            raise CaseValidationError(
                f"{owner}: crowbar thresholds must satisfy 0 < on < off"
            )

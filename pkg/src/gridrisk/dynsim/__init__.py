"""RMS time-domain simulation: machines, controllers, faults, integrator."""

from ..machine_params import (
    ControllerParams,
    DfigParams,
    ExciterParams,
    GovernorParams,
    PssParams,
    SyncMachineParams,
)
from .trajectory import FaultEvent, Trajectory
from .machines import (
    DynamicState,
    SimModel,
    assemble,
    dfig_derivatives,
    initialize,
    residual_norm,
    sg_currents,
    sg_derivatives,
)
from .faults import fault_shunt_admittance, sequence_thevenins
from .simulate import init_dynamics, run_simulation

__all__ = [
    "ControllerParams", "DfigParams", "ExciterParams", "GovernorParams",
    "PssParams", "SyncMachineParams", "FaultEvent", "Trajectory",
    "DynamicState", "SimModel", "assemble", "dfig_derivatives", "initialize",
    "residual_norm", "sg_currents", "sg_derivatives",
    "fault_shunt_admittance", "sequence_thevenins",
    "init_dynamics", "run_simulation",
]

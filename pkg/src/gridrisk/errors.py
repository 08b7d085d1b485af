"""Exception types shared across the package."""


class GridRiskError(Exception):
    """Base class for all package errors."""


class CaseFormatError(GridRiskError):
    """The case file could not be parsed against the documented schema."""


class CaseValidationError(GridRiskError):
    """A parsed case violates a structural invariant (names the offending element)."""


class PowerFlowError(GridRiskError):
    """Power flow failed (non-convergence or singular Jacobian)."""


class InitializationError(GridRiskError):
    """Dynamic initialization could not hold the operating point."""


class SimulationSetupError(GridRiskError):
    """A simulation could not be set up (bad fault spec, bad grid alignment)."""


class MonteCarloError(GridRiskError):
    """The Monte Carlo run failed (no successful samples, excessive failures)."""


class ScenarioError(GridRiskError):
    """A scenario transform was rejected (bad unit list, infeasible scaling)."""


class MetricsError(GridRiskError):
    """A stability metric is undefined for the given trajectory."""

"""Exception types shared across the package."""


class SatFLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SatFLError, ValueError):
    """Invalid constellation, scenario or dataset configuration."""


class InfeasibleError(SatFLError):
    """A cluster can never complete the requested step within the horizon."""


class HorizonExhaustedError(InfeasibleError):
    """A visibility search ran past the end of the computed pattern."""


class SchedulingInconsistencyError(SatFLError):
    """Scheduler inputs contradict each other (e.g. no visible member)."""


class ProtocolError(SatFLError):
    """Malformed ring-protocol or aggregation input."""


class DeadlineViolation(SatFLError):
    """A cluster aggregate reached the ground station after t_n."""


class NumericDivergenceError(SatFLError, FloatingPointError):
    """Local training produced a non-finite loss or gradient."""

"""Exception hierarchy.

Every error carries a stable ``code`` string so that command-line callers can
report failures in machine-readable form.
"""


class RipGateError(Exception):
    """Base class for all package errors."""

    code = "ripgate_error"


class ParameterError(RipGateError, ValueError):
    code = "parameter_error"


class DegenerateDenominator(ParameterError):
    """A perturbative denominator vanished (a resonance is straddled)."""

    code = "degenerate_denominator"


class NotDispersive(ParameterError):
    code = "not_dispersive"


class UnsupportedDegree(RipGateError, ValueError):
    code = "unsupported_degree"


class OutOfRange(RipGateError, ValueError):
    code = "out_of_range"


class ZeroLoss(RipGateError, ValueError):
    """Steady state requested for a lossless resonator."""

    code = "zero_loss"


class OrderTooHigh(RipGateError, ValueError):
    code = "order_too_high"


class UnsupportedEnvelope(RipGateError, TypeError):
    code = "unsupported_envelope"


class InvalidTable(RipGateError, ValueError):
    code = "invalid_table"


class NoSolution(RipGateError, RuntimeError):
    code = "no_solution"


class EmptyNullspace(RipGateError, ValueError):
    code = "empty_nullspace"


class NoProgress(RipGateError, RuntimeError):
    code = "no_progress"


class CutoffExceeded(RipGateError, RuntimeError):
    """Population leaked into the top Fock level of the truncated bus."""

    code = "cutoff_exceeded"


class StepUnderflow(RipGateError, RuntimeError):
    code = "step_underflow"


class GridMismatch(RipGateError, ValueError):
    code = "grid_mismatch"


class UsageError(RipGateError, ValueError):
    code = "usage_error"

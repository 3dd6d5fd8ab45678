"""Exception hierarchy.

The CLI maps these onto exit codes: validation-type errors exit 2,
:class:`InfeasibleError` exits 3, solver failures exit 4.
"""


class ThermowitError(Exception):
    """Base class for all errors raised by thermowit."""


class ValidationError(ThermowitError, ValueError):
    """Input violates a type invariant (Hermiticity, trace, positivity, ...)."""


class DimensionError(ValidationError):
    """Incompatible or out-of-range subsystem dimensions or indices."""


class DomainError(ValidationError):
    """Scalar argument outside its mathematical domain."""


class InfeasibleError(ThermowitError):
    """Free-energy target lies below the Gibbs free energy."""


class NumericalConsistencyError(ThermowitError):
    """An internal identity failed to hold within tolerance."""


class FixedPointError(ThermowitError):
    """The memory fixed-point solver did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class TruncationError(ThermowitError):
    """Fock-space truncation is too small for the requested accuracy."""

    def __init__(self, message, leakage=None):
        super().__init__(message)
        self.leakage = leakage

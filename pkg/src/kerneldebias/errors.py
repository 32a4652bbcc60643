"""Exception types shared across the library."""


class KernelDebiasError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KernelDebiasError, ValueError):
    """A configuration value is out of its legal range (tau, gamma, r, ...)."""


class ValidationError(KernelDebiasError, ValueError):
    """Input data failed validation (non-finite entries, missing columns, ...)."""


class ShapeError(ValidationError):
    """Operands have non-conformable or unexpected shapes."""


class DegenerateInputError(ValidationError):
    """Input is degenerate for the requested operation (e.g. no distinct rows)."""


class FormatError(KernelDebiasError, ValueError):
    """An on-disk artifact violates its format contract.

    ``offset`` is the byte offset at which the violation was detected, when
    known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UpgradeError(FormatError):
    """Artifact was written by an incompatible container version."""


class NumericalError(KernelDebiasError, RuntimeError):
    """A numerical routine failed; the message carries condition diagnostics."""


class AllocationAuditError(KernelDebiasError, RuntimeError):
    """An n-by-n intermediate was allocated while an allocation audit was active."""

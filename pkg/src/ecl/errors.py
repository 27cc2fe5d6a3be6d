"""Exception types shared across the package."""


class EclError(Exception):
    """Base class for all package-specific errors."""


class EconomyError(EclError, ValueError):
    """Raised when an economy, allocation or price system violates an invariant."""


class SolverError(EclError, RuntimeError):
    """Raised when an equilibrium solve fails to converge.

    Attributes:
        state_label: label of the offending state, when known.
        residual: best residual reached before giving up.
    """

    def __init__(self, message, state_label=None, residual=None):
        super().__init__(message)
        self.state_label = state_label
        self.residual = residual


class InstanceTooLargeError(EclError, ValueError):
    """Raised when an exhaustive oracle is asked to enumerate an infeasibly large grid."""


class UndecidedError(EclError, RuntimeError):
    """Raised when a constructive search exhausts its budget without a verdict."""


class StaleCertificateError(EclError, ValueError):
    """Raised when a certificate fails independent re-verification."""

class FringeFCSError(Exception):
    """Base class for all errors raised by this package."""


class GridError(FringeFCSError, ValueError):
    """Lattice or bin geometry is inconsistent (too small, misaligned, mismatched)."""


class StateError(FringeFCSError, ValueError):
    """A cloud specification or two-cloud state violates its invariants."""


class QuadratureError(FringeFCSError, ArithmeticError):
    """Phase quadrature did not converge under node doubling."""


class DomainError(FringeFCSError, ValueError):
    """Problem size outside the domain an oracle or sampler supports."""


class RejectionLimitError(FringeFCSError, RuntimeError):
    pass


class DegenerateObjectiveError(FringeFCSError, ArithmeticError):
    """The phase objective carries no information (flat across the scan)."""


class ZeroInformationError(FringeFCSError, ArithmeticError):
    pass


class ConfigError(FringeFCSError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

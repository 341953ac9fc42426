"""Exception types shared across the package."""


class VppresError(Exception):
    """Base class for all package-specific errors."""


class OverdampedError(VppresError):
    """Gain pair yields zeta >= 1: the sinusoidal closed form is invalid.

    Callers building feasible regions should treat the pair as infeasible
    rather than aborting.
    """

    def __init__(self, zeta, message=None):
        self.zeta = zeta
        super().__init__(message or f"overdamped characteristic (zeta = {zeta:.6g} >= 1)")


class InfeasibleError(VppresError):
    """A constraint set admits no solution; carries a certificate message."""


class SolverError(VppresError):
    """Numerical solver failed to converge; carries the residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class DivergenceError(SolverError):
    """State integration blew up (|state| beyond the divergence guard)."""


class ConfigError(VppresError):
    """Configuration file is invalid; message names the offending field."""


class GridMismatchError(VppresError):
    """Two sampled profiles do not share a common time grid."""

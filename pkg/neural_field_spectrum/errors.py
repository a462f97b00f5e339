"""
Exception hierarchy for the neural field solvers.

Every failure raised by the library derives from NeuralFieldError so the CLI
can map it to an exit status in one place.
"""

from typing import Optional


class NeuralFieldError(Exception):
    """Base class for all library errors."""


class ConfigError(NeuralFieldError):
    """Invalid or unreadable run configuration."""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        self.source = source
        self.line = line
        where = ""
        if source:
            where = f"{source}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


# =============================================================================
# Solver failures
# =============================================================================

class NonConvergence(NeuralFieldError):
    """An iteration ran out of steps before meeting its tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")


class SingularJacobian(NeuralFieldError):
    """The Newton linear solve failed."""


class EmptyInput(NeuralFieldError):
    """An operation received an empty sequence."""


class DuplicateCollapse(NeuralFieldError):
    """Distinct seeds collapsed onto fewer roots than required."""


# =============================================================================
# Spectral degeneracies
# =============================================================================

class ResonantParameter(NeuralFieldError):
    """z lies in the resonance set, or a denominator k_i^2 - rho^2 vanishes."""


class DegenerateClass(NeuralFieldError):
    """An equivalence class has fewer than 2(N+1) distinct elements."""


class RankConditionFailed(NeuralFieldError):
    """A constructed coefficient matrix does not annihilate the S-matrices."""


class ResonantTruncation(NeuralFieldError):
    """A truncated basis hits k^2 = rho_m^2 or k^2 = nu_n^2."""


class ResonantSolution(NeuralFieldError):
    """Newton converged to a point of the resonance set."""


class EigenvalueHit(NeuralFieldError):
    """The resolvent was requested at (numerically) an eigenvalue."""

    def __init__(self, message: str, rho: complex = 0j, nu: complex = 0j, p_value: float = 0.0):
        self.rho = rho
        self.nu = nu
        self.p_value = p_value
        super().__init__(message)


class ContourHitsEigenvalue(NeuralFieldError):
    """A contour point of the Lyapunov integral is an eigenvalue or encloses another."""


class DegenerateEigenfunction(NeuralFieldError):
    """No interior sample point is usable for the g21 average."""


# =============================================================================
# Continuation and simulation
# =============================================================================

class NoCrossing(NeuralFieldError):
    """Re z keeps its sign over the requested parameter range."""


class LostTracking(NeuralFieldError):
    """Continuation Newton failed between two parameter steps."""


class BlowUp(NeuralFieldError):
    """The simulated field exceeded its ceiling."""

    def __init__(self, message: str, time: float = float("nan"), value: float = float("nan")):
        self.time = time
        self.value = value
        super().__init__(message)


class NoOscillation(NeuralFieldError):
    """Too few zero crossings to define a period."""

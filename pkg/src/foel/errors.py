from __future__ import annotations

from typing import Any


class FoelError(Exception):
    """Base class for every error raised by the foel package."""


class CapacityError(FoelError, ValueError):
    """Raised when a sector lies outside the supported sizes."""


class DimensionMismatchError(FoelError, ValueError):
    """Raised when a vector does not match the sector dimension."""

    def __init__(self, expected: int, actual: int) -> None:
        super().__init__(
            f"Vector has length {actual}, but the sector dimension is {expected}."
        )
        self.expected = expected
        self.actual = actual


class GeometryError(FoelError, ValueError):
    """Raised when an operation is not defined for the sector geometry."""


class ThresholdExceededError(FoelError):
    """Raised when a dense computation is requested above the dense threshold."""

    def __init__(self, dimension: int, threshold: int) -> None:
        super().__init__(
            f"Sector dimension {dimension} exceeds the dense threshold {threshold}."
        )
        self.dimension = dimension
        self.threshold = threshold


class SolverConvergenceError(FoelError):
    """Raised when an eigensolver fails to reach the requested residual."""

    def __init__(self, message: str, *, residual: float | None = None) -> None:
        super().__init__(message)
        self.residual = residual


class LabelAmbiguityError(FoelError):
    """Raised when an eigenvector cannot be assigned a spin or momentum label."""

    def __init__(self, message: str, *, energy: float, value: complex) -> None:
        super().__init__(message)
        self.energy = energy
        self.value = value


class BetheError(FoelError):
    """Base class for failures of the Bethe root solver."""


class RootCollisionError(BetheError):
    """Raised when two rapidities come closer than the separation guard."""


class SingularJacobianError(BetheError):
    """Raised when the Newton Jacobian cannot be inverted."""


class NewtonDivergenceError(BetheError):
    """Raised when Newton iteration fails to converge."""

    def __init__(self, message: str, *, history: list[dict[str, Any]]) -> None:
        super().__init__(message)
        self.history = history


class VerificationError(FoelError):
    """Raised when an algebraic identity fails to hold."""

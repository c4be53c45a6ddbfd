"""Exception hierarchy for the surface reconstruction toolkit."""
from __future__ import annotations

from typing import Optional


class SurfReconError(Exception):
    """Base class for every error raised by the toolkit."""


class KernelDomainError(SurfReconError, ValueError):
    """Special function evaluated outside its domain (argument <= 0)."""


class SingularityError(SurfReconError, ValueError):
    """Kernel evaluated at coincident points or observation line touching the surface."""


class ResolutionError(SurfReconError, ValueError):
    """Grid too coarse for the requested correlation length."""


class DegenerateSurfaceError(SurfReconError, ValueError):
    """Operation needs a non-flat (or non-zero) surface."""


class SingularMatrixError(SurfReconError):
    """LU factorization hit a vanishing pivot."""

    def __init__(self, message: str, rcond: Optional[float] = None) -> None:
        super().__init__(message)
        self.rcond = rcond


class TrainingDivergedError(SurfReconError):
    """Non-finite gradient or loss during optimization."""

    def __init__(self, message: str, iteration: int, block: Optional[int] = None) -> None:
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.block = block


class MetadataConflictError(SurfReconError):
    """Field-file metadata disagrees with the requested experiment."""

"""Gaussian-correlated rough surfaces on a uniform panel grid.

Lengths are in wavelengths of the incident field. Surfaces are carried at
panel midpoints X_n = -L + (n - 1/2) dx, n = 1..N.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from app.core.errors import DegenerateSurfaceError, ResolutionError

logger = logging.getLogger(__name__)

DEFAULT_TAPER_MARGIN = 1.0
TAPER_WIDTH_FRACTION = 0.2

# One-sided 4th-order stencils for the two outermost points (left edge).
_D1_EDGE = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0, 0.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0, 0.0]) / 12.0,
)
_D2_EDGE = (
    np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
)


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [-L, L] into N panels."""

    half_length: float
    n_panels: int

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.n_panels

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_panels + 1) * self.dx - self.half_length

    @property
    def midpoints(self) -> np.ndarray:
        x = self.nodes
        return 0.5 * (x[:-1] + x[1:])


def make_grid(half_length: float, n_panels: int) -> Grid:
    if int(n_panels) != n_panels or n_panels < 1:
        raise ValueError(f"n_panels must be a positive integer, got {n_panels}")
    if not half_length > 0.0:
        raise ValueError(f"half_length must be positive, got {half_length}")
    return Grid(float(half_length), int(n_panels))


@dataclass(frozen=True)
class SurfaceRealization:
    grid: Grid
    h: np.ndarray
    dh: np.ndarray
    d2h: np.ndarray
    scale: float = float("nan")
    peak_to_trough: float = 0.0
    seed: Optional[int] = None

    @property
    def x(self) -> np.ndarray:
        return self.grid.midpoints

    @property
    def max_height(self) -> float:
        return float(np.max(self.h))


# -- generation ----------------------------------------------------------------


def _supergrid_size(grid: Grid, scale: float) -> int:
    needed = grid.n_panels + int(np.ceil(6.0 * scale / grid.dx))
    return 1 << int(np.ceil(np.log2(max(needed, 2))))


def check_resolution(grid: Grid, scale: float) -> None:
    if not scale > 0.0:
        raise ValueError(f"correlation length must be positive, got {scale}")
    if grid.dx >= 0.5 * scale:
        raise ResolutionError(
            f"dx={grid.dx:.4g} cannot resolve correlation length l={scale:.4g} (need dx < l/2)"
        )
    if grid.dx >= 0.25 * scale:
        logger.warning("Coarse grid: dx=%.4g is not below l/4 for l=%.4g", grid.dx, scale)


def generate_gaussian_surface(grid: Grid, scale: float, seed: int) -> np.ndarray:
    """Zero-mean stationary Gaussian heights with a.c.f. exp(-eta^2 / l^2).

    Spectral synthesis on a periodic supergrid long enough that the correlation
    has decayed (six correlation lengths of padding); the first N samples are
    returned at the grid midpoints. Deterministic in `seed`.
    """
    check_resolution(grid, scale)
    m = _supergrid_size(grid, scale)
    lag = grid.dx * np.minimum(np.arange(m), m - np.arange(m))
    spectrum = np.clip(np.fft.fft(np.exp(-((lag / scale) ** 2))).real, 0.0, None)
    logger.debug("Surface synthesis on %d-point supergrid (N=%d, l=%.4g)", m, grid.n_panels, scale)

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(m)
    heights = np.fft.ifft(np.sqrt(spectrum) * np.fft.fft(noise)).real
    return heights[: grid.n_panels].copy()


def taper_weight(x, half_length: float, margin: float, width: Optional[float] = None) -> np.ndarray:
    """w(x) = 1/4 (1 + tanh((x + L - m)/s)) (1 + tanh((L - m - x)/s))."""
    s = margin * TAPER_WIDTH_FRACTION if width is None else width
    x = np.asarray(x, dtype=float)
    return 0.25 * (1.0 + np.tanh((x + half_length - margin) / s)) * (1.0 + np.tanh((half_length - margin - x) / s))


def taper_edges(
    heights: np.ndarray, grid: Grid, margin: float = DEFAULT_TAPER_MARGIN, width: Optional[float] = None
) -> np.ndarray:
    if not 0.0 < margin < grid.half_length:
        raise ValueError(f"taper margin must lie in (0, L={grid.half_length}), got {margin}")
    return np.asarray(heights, dtype=float) * taper_weight(grid.midpoints, grid.half_length, margin, width)


def scale_to_peak_trough(heights: np.ndarray, target: float) -> np.ndarray:
    """Multiply by c so that max - min equals `target`."""
    if not target > 0.0:
        raise ValueError(f"peak-to-trough target must be positive, got {target}")
    heights = np.asarray(heights, dtype=float)
    span = float(np.max(heights) - np.min(heights)) if heights.size else 0.0
    if not span > 0.0:
        raise DegenerateSurfaceError("cannot scale a flat surface to a peak-to-trough height")
    return heights * (target / span)


# -- derivatives -------------------------------------------------------------------


def derivatives_spectral(heights: np.ndarray, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """First and second x-derivatives by 4th-order finite differences.

    Central five-point stencils in the interior, one-sided 4th-order stencils at
    the two outermost points on each side. Needs at least six samples.
    """
    h = np.asarray(heights, dtype=float)
    n = h.size
    if n < 6:
        raise ValueError(f"need at least 6 samples for 4th-order differences, got {n}")
    dx = grid.dx

    d1 = np.empty(n)
    d2 = np.empty(n)
    d1[2:-2] = (-h[4:] + 8.0 * h[3:-1] - 8.0 * h[1:-3] + h[:-4]) / (12.0 * dx)
    d2[2:-2] = (-h[4:] + 16.0 * h[3:-1] - 30.0 * h[2:-2] + 16.0 * h[1:-3] - h[:-4]) / (12.0 * dx * dx)

    left = h[:6]
    right = h[::-1][:6]
    for i in range(2):
        d1[i] = _D1_EDGE[i] @ left / dx
        d1[n - 1 - i] = -(_D1_EDGE[i] @ right) / dx
        d2[i] = _D2_EDGE[i] @ left / (dx * dx)
        d2[n - 1 - i] = _D2_EDGE[i] @ right / (dx * dx)
    return d1, d2


# -- realizations ------------------------------------------------------------------


def from_heights(grid: Grid, heights, scale: float = float("nan"), seed: Optional[int] = None) -> SurfaceRealization:
    h = np.asarray(heights, dtype=float)
    if h.shape != (grid.n_panels,):
        raise ValueError(f"expected {grid.n_panels} heights, got shape {h.shape}")
    dh, d2h = derivatives_spectral(h, grid)
    return SurfaceRealization(grid, h, dh, d2h, scale, float(np.ptp(h)), seed)


def from_function(grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> SurfaceRealization:
    """Sample an analytic profile at the midpoints; derivatives by finite differences."""
    return from_heights(grid, fn(grid.midpoints))


def flat_surface(grid: Grid) -> SurfaceRealization:
    zero = np.zeros(grid.n_panels)
    return SurfaceRealization(grid, zero, zero.copy(), zero.copy(), float("nan"), 0.0)


def make_surface(
    grid: Grid,
    scale: float,
    peak_to_trough: float,
    seed: int,
    margin: float = DEFAULT_TAPER_MARGIN,
) -> SurfaceRealization:
    """generate -> taper -> scale, then differentiate.

    `peak_to_trough == 0` yields the flat surface.
    """
    if peak_to_trough == 0.0:
        return flat_surface(grid)
    raw = generate_gaussian_surface(grid, scale, seed)
    h = scale_to_peak_trough(taper_edges(raw, grid, margin), peak_to_trough)
    dh, d2h = derivatives_spectral(h, grid)
    return SurfaceRealization(grid, h, dh, d2h, float(scale), float(peak_to_trough), seed)


def sample_heights(surface: SurfaceRealization, x) -> np.ndarray:
    """Linear interpolation of h at arbitrary abscissae (0 outside the hull)."""
    return np.interp(np.asarray(x, dtype=float), surface.x, surface.h, left=0.0, right=0.0)

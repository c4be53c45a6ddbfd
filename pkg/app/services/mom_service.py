"""Method-of-moments operators for TE (Dirichlet) and TM (Neumann) PEC surfaces.

Integral relations, with n' the upward unit normal and ds' = sqrt(1 + h'^2) dx':

    TE:  psi_i(r) = int G u ds',              psi_s = -int G u ds',   u = d(psi)/dn'
    TM:  psi_i(r) = psi/2 - int n'.grad'G psi ds',   psi_s = int n'.grad'G psi ds'

Unknowns are constant on each panel and collocated at the midpoints X_n. Panel
integrals use Simpson's rule on the two end nodes and the midpoint. Midpoint
values are the surface samples themselves; node values of h and h' come from
4-point cubic reconstruction of the midpoint samples (ghost value 0 beyond both
ends). For TE the ln|x' - X_n| part of G on nearby panels is integrated exactly
against the quadratic that Simpson's rule assumes. The diagonal panel is
replaced by a self-term. Every function here accepts plain arrays or tape
`Var`s for h, h', h'' and returns `CArray`s, so the forward simulator and the
training loop share this code path.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, NamedTuple, Optional, Tuple

import numpy as np

from app.autodiff import functional as F
from app.autodiff.complex import CArray, solve
from app.autodiff.jet import Jet2
from app.core.errors import SingularityError
from app.services.specfun import EULER_GAMMA
from app.services.surface_service import Grid, SurfaceRealization

logger = logging.getLogger(__name__)

# Cubic reconstruction at a node from the four nearest midpoints.
NODE_STENCIL = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
# Panels on each side of the collocation point that get the exact log integral.
LOG_BAND = 8


class Polarization(str, Enum):
    TE = "TE"
    TM = "TM"


@dataclass(frozen=True)
class ScatterProblem:
    """Plane-wave incidence on a surface sampled on `grid`, observed at z = zeta."""

    polarization: Polarization
    k: float
    alpha: float
    zeta: float
    grid: Grid
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        if not self.k > 0.0:
            raise ValueError(f"wavenumber must be positive, got {self.k}")


class SurfaceFields(NamedTuple):
    h: Any
    dh: Any
    d2h: Any = None


def surface_fields(surface) -> SurfaceFields:
    """Normalize a realization, a jet or an (h, dh[, d2h]) tuple."""
    if isinstance(surface, SurfaceRealization):
        return SurfaceFields(surface.h, surface.dh, surface.d2h)
    if isinstance(surface, Jet2):
        return SurfaceFields(surface.v, surface.d1, surface.d2)
    return SurfaceFields(*surface)


@lru_cache(maxsize=32)
def _node_interpolation(n: int) -> np.ndarray:
    """(N+1) x N cubic map from midpoint samples to node values, zero ghosts at the ends."""
    p = np.zeros((n + 1, n))
    for j in range(n + 1):
        for weight, col in zip(NODE_STENCIL, range(j - 2, j + 2)):
            if 0 <= col < n:
                p[j, col] = weight
    p.setflags(write=False)
    return p


@lru_cache(maxsize=32)
def _panel_sum(n: int) -> np.ndarray:
    """(N+1) x N map summing the two end nodes of each panel."""
    q = np.zeros((n + 1, n))
    idx = np.arange(n)
    q[idx, idx] = 1.0
    q[idx + 1, idx] = 1.0
    q.setflags(write=False)
    return q


@lru_cache(maxsize=32)
def _off_diagonal(n: int) -> np.ndarray:
    mask = 1.0 - np.eye(n)
    mask.setflags(write=False)
    return mask


def _log_panel_weights(m: int) -> Tuple[float, float, float]:
    """Exact minus Simpson weights of ln|u| on the unit panel [m - 1/2, m + 1/2], m >= 1.

    Weights belong to the quadratic through (left node, midpoint, right node).
    """
    u0, u1 = m - 0.5, m + 0.5

    def antiderivatives(u: float) -> np.ndarray:
        lu = math.log(u)
        return np.array([u * lu - u, 0.5 * u * u * lu - 0.25 * u * u, u**3 / 3.0 * lu - u**3 / 9.0])

    i0, i1, i2 = antiderivatives(u1) - antiderivatives(u0)
    # moments of t^0, t^1, t^2 with t = u - u0
    t0 = i0
    t1 = i1 - u0 * i0
    t2 = i2 - 2.0 * u0 * i1 + u0 * u0 * i0
    exact = (2.0 * t2 - 3.0 * t1 + t0, 4.0 * t1 - 4.0 * t2, 2.0 * t2 - t1)
    simpson = (math.log(u0) / 6.0, 4.0 * math.log(m) / 6.0, math.log(u1) / 6.0)
    return tuple(e - s for e, s in zip(exact, simpson))


@lru_cache(maxsize=32)
def _log_weights(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Banded N x N (left node, midpoint, right node) correction weights per unit dx."""
    left, mid, right = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))
    rows = np.arange(n)
    for m in range(1, min(LOG_BAND, n - 1) + 1):
        c_left, c_mid, c_right = _log_panel_weights(m)
        idx = rows[: n - m]
        left[idx, idx + m], mid[idx, idx + m], right[idx, idx + m] = c_left, c_mid, c_right
        # mirror image: panels to the left of the collocation point
        left[idx + m, idx], mid[idx + m, idx], right[idx + m, idx] = c_right, c_mid, c_left
    for w in (left, mid, right):
        w.setflags(write=False)
    return left, mid, right


# -- field evaluation -----------------------------------------------------------


def incident_field(problem: ScatterProblem, x, z=None) -> CArray:
    """psi_i = A exp(ik(cos(alpha) x + sin(alpha) z)).

    Either pass an (M, 2) array of points as `x`, or abscissae `x` and heights
    `z` separately (either may be tracked).
    """
    if z is None:
        pts = np.asarray(x, dtype=float).reshape(-1, 2)
        x, z = pts[:, 0], pts[:, 1]
    phase = problem.k * (np.cos(problem.alpha) * x + np.sin(problem.alpha) * z)
    return CArray.expi(phase) * problem.amplitude


def _hankel0(arg) -> CArray:
    j, y = F.hankel0(arg)
    return CArray(j, y)


def _hankel1(arg) -> CArray:
    j, y = F.hankel1(arg)
    return CArray(j, y)


def _nodes(grid: Grid, h, dh):
    p = _node_interpolation(grid.n_panels)
    return F.matmul(p, h), F.matmul(p, dh)


def _distance(dx: np.ndarray, dz):
    return F.sqrt(dx * dx + dz * dz)


def _offsets(grid: Grid, x_from: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """x-offsets from each source abscissa to every node and every midpoint."""
    return grid.nodes[None, :] - x_from[:, None], grid.midpoints[None, :] - x_from[:, None]


def _panel_integrate(at_nodes: CArray, at_midpoints: CArray, grid: Grid) -> CArray:
    """Simpson's rule per panel: (M x N+1) node values and (M x N) midpoint values -> (M x N)."""
    return (at_nodes @ _panel_sum(grid.n_panels) + at_midpoints * 4.0) * (grid.dx / 6.0)


def _green_times_arc(k: float, dx: np.ndarray, dz, arc) -> CArray:
    """(i/4) H0(kd) sqrt(1 + h'^2) at the integration points."""
    d = _distance(dx, dz)
    return _hankel0(d * k) * 0.25j * arc


def _normal_kernel(k: float, dx: np.ndarray, dz, slope) -> CArray:
    """K ds/dx with K = (ik/4) H1(kd) n'.(q - p)/d; equals -n'.grad'G.

    dx, dz are the components of q - p; the sqrt(1 + h'^2) of n' cancels ds/dx.
    """
    d = _distance(dx, dz)
    proj = (dz - slope * dx) / d
    return _hankel1(d * k) * (0.25j * k) * proj


def _log_singular_correction(grid: Grid, arc_nodes, arc_mid):
    """Exact-minus-Simpson integral of -(1/2 pi) ln|x' - X_n| sqrt(1 + h'^2) near the diagonal."""
    n = grid.n_panels
    left, mid, right = _log_weights(n)
    corr = (
        left * arc_nodes[:-1].reshape(1, n)
        + mid * arc_mid.reshape(1, n)
        + right * arc_nodes[1:].reshape(1, n)
    )
    return corr * (-grid.dx / (2.0 * np.pi))


def _check_observation_height(problem: ScatterProblem, h) -> None:
    top = float(np.max(F.value_of(h)))
    if not problem.zeta > top:
        raise SingularityError(f"observation height zeta={problem.zeta} does not clear the surface (max h={top:.6g})")


def dirichlet_self_term(k: float, dx: float, dh) -> CArray:
    """Panel integral of G over its own panel from the small-argument expansion.

    With ds = dx sqrt(1 + h'^2) and lg = ln(k ds / 4):

        (i/4) ds [1 + (2i/pi)(lg + gamma - 1)]
          + (i/4) (k^2 ds^3 / 48) [-1 + (2i/pi)(4/3 - gamma - lg)]
    """
    ds = F.sqrt(dh * dh + 1.0) * dx
    lg = F.log(ds * (0.25 * k))
    ds3 = ds * ds * ds * (k * k / 48.0)
    # (i/4)(2i/pi) = -1/(2 pi)
    re = ds * (lg + (EULER_GAMMA - 1.0)) * (-0.5 / np.pi) + ds3 * ((4.0 / 3.0 - EULER_GAMMA) - lg) * (-0.5 / np.pi)
    im = ds * 0.25 - ds3 * 0.25
    return CArray(re, im)


def neumann_self_term(dx: float, dh, d2h) -> CArray:
    """Own-panel integral of K ds, from the curvature limit -h''/(4 pi (1 + h'^2)) per dx."""
    return CArray(d2h * (-dx / (4.0 * np.pi)) / (dh * dh + 1.0))


def _observation_abscissae(problem: ScatterProblem, x_obs) -> np.ndarray:
    return problem.grid.midpoints if x_obs is None else np.asarray(x_obs, dtype=float)


def _with_diagonal(off: CArray, diagonal: CArray, n: int) -> CArray:
    mask = _off_diagonal(n)
    return CArray(off.re * mask + F.diag(diagonal.re), off.im * mask + F.diag(diagonal.im))


def assemble_dirichlet(problem: ScatterProblem, surface, x_obs=None) -> Tuple[CArray, CArray]:
    """(A_D, B_D) such that psi_s = B_D A_D^{-1} psi_i for the Dirichlet problem.

    A_D[n, l] integrates G over panel l seen from the surface midpoint n; B_D is
    minus the same integral seen from the observation points (x_obs, zeta).
    """
    fields = surface_fields(surface)
    grid = problem.grid
    n = grid.n_panels
    _check_observation_height(problem, fields.h)

    h_nodes, s_nodes = _nodes(grid, fields.h, fields.dh)
    arc_nodes = F.sqrt(s_nodes * s_nodes + 1.0)
    arc_mid = F.sqrt(fields.dh * fields.dh + 1.0)
    h_row_nodes, h_row = h_nodes.reshape(1, n + 1), fields.h.reshape(1, n)
    arc_row_nodes, arc_row = arc_nodes.reshape(1, n + 1), arc_mid.reshape(1, n)

    dx_nodes, dx_mid = _offsets(grid, grid.midpoints)
    h_col = fields.h.reshape(n, 1)
    # unit offset keeps the (masked) diagonal away from the singularity
    at_nodes = _green_times_arc(problem.k, dx_nodes, h_row_nodes - h_col, arc_row_nodes)
    at_mid = _green_times_arc(problem.k, dx_mid + np.eye(n), h_row - h_col, arc_row)
    a_off = _panel_integrate(at_nodes, at_mid, grid) + _log_singular_correction(grid, arc_nodes, arc_mid)
    a = _with_diagonal(a_off, dirichlet_self_term(problem.k, grid.dx, fields.dh), n)

    x_o = _observation_abscissae(problem, x_obs)
    dx_nodes_o, dx_mid_o = _offsets(grid, x_o)
    b = -_panel_integrate(
        _green_times_arc(problem.k, dx_nodes_o, h_row_nodes - problem.zeta, arc_row_nodes),
        _green_times_arc(problem.k, dx_mid_o, h_row - problem.zeta, arc_row),
        grid,
    )
    return a, b


def assemble_neumann(problem: ScatterProblem, surface, x_obs=None) -> Tuple[CArray, CArray]:
    """(A_N, B_N) such that psi_s = B_N A_N^{-1} psi_i for the Neumann problem.

    A_N = 1/2 I + int K ds (own panel via the curvature limit), B_N = -int K ds
    at the observation points.
    """
    fields = surface_fields(surface)
    if fields.d2h is None:
        raise ValueError("Neumann assembly needs second derivatives of the surface")
    grid = problem.grid
    n = grid.n_panels
    _check_observation_height(problem, fields.h)

    h_nodes, s_nodes = _nodes(grid, fields.h, fields.dh)
    h_row_nodes, h_row = h_nodes.reshape(1, n + 1), fields.h.reshape(1, n)
    slope_nodes, slope = s_nodes.reshape(1, n + 1), fields.dh.reshape(1, n)

    dx_nodes, dx_mid = _offsets(grid, grid.midpoints)
    h_col = fields.h.reshape(n, 1)
    at_nodes = _normal_kernel(problem.k, dx_nodes, h_row_nodes - h_col, slope_nodes)
    at_mid = _normal_kernel(problem.k, dx_mid + np.eye(n), h_row - h_col, slope)
    a_off = _panel_integrate(at_nodes, at_mid, grid)
    diagonal = neumann_self_term(grid.dx, fields.dh, fields.d2h) + 0.5
    a = _with_diagonal(a_off, diagonal, n)

    x_o = _observation_abscissae(problem, x_obs)
    dx_nodes_o, dx_mid_o = _offsets(grid, x_o)
    b = -_panel_integrate(
        _normal_kernel(problem.k, dx_nodes_o, h_row_nodes - problem.zeta, slope_nodes),
        _normal_kernel(problem.k, dx_mid_o, h_row - problem.zeta, slope),
        grid,
    )
    return a, b


def solve_linear(a, b):
    """Dense LU solve. Complex ndarrays in, complex ndarray out; `CArray`s stay `CArray`s.

    Raises:
        SingularMatrixError: a pivot vanished; carries the pivot-ratio estimate.
    """
    if isinstance(a, CArray) or isinstance(b, CArray):
        a = a if isinstance(a, CArray) else CArray.from_numpy(a)
        b = b if isinstance(b, CArray) else CArray.from_numpy(b)
        return solve(a, b)
    return solve(CArray.from_numpy(a), CArray.from_numpy(b)).to_numpy()


def scattered_field(problem: ScatterProblem, surface, x_obs=None) -> CArray:
    """psi_s = B A^{-1} psi_i at the observation points (x_obs, zeta).

    `x_obs` defaults to the surface midpoints. TE ignores h'' entirely.
    """
    fields = surface_fields(surface)
    if problem.polarization is Polarization.TE:
        a, b = assemble_dirichlet(problem, fields, x_obs)
    else:
        a, b = assemble_neumann(problem, fields, x_obs)
    rhs = incident_field(problem, problem.grid.midpoints, fields.h)
    unknown = solve(a, rhs)
    return b @ unknown


def simulate(problem: ScatterProblem, surface: SurfaceRealization, x_obs=None) -> np.ndarray:
    """Untracked forward solve; complex scattered field at the observation points."""
    logger.debug(
        "Forward %s solve: N=%d, k=%.4g, alpha=%.4g, zeta=%.4g",
        problem.polarization.value,
        problem.grid.n_panels,
        problem.k,
        problem.alpha,
        problem.zeta,
    )
    return scattered_field(problem, surface, x_obs).to_numpy()


def total_field(problem: ScatterProblem, surface: SurfaceRealization, x_obs=None, z_obs: Optional[float] = None) -> np.ndarray:
    """psi_i + psi_s on the line z = z_obs (defaults to zeta)."""
    if z_obs is not None:
        problem = ScatterProblem(problem.polarization, problem.k, problem.alpha, z_obs, problem.grid, problem.amplitude)
    x_o = _observation_abscissae(problem, x_obs)
    psi_i = incident_field(problem, x_o, np.full_like(x_o, problem.zeta)).to_numpy()
    return psi_i + simulate(problem, surface, x_o)

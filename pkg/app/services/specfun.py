"""Bessel/Hankel kernels and the free-space 2D Helmholtz Green's function.

The Bessel functions use the classic piecewise rational fits: a ratio of
polynomials in x^2 below the switch point x = 8 and the Hankel asymptotic
form (modulus/phase polynomials in (8/x)^2) above it. Absolute accuracy is
about 1e-8 on (0, 1e3].

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from typing import Tuple, Union

import numpy as np

from app.core.errors import KernelDomainError, SingularityError

ArrayLike = Union[float, np.ndarray]

SWITCH = 8.0
TWO_OVER_PI = 2.0 / np.pi
PI_OVER_4 = 0.25 * np.pi
THREE_PI_OVER_4 = 0.75 * np.pi
EULER_GAMMA = 0.57721566490153286061


def _poly(y: np.ndarray, coefs: Tuple[float, ...]) -> np.ndarray:
    """Horner evaluation, coefficients ordered from the constant term up."""
    out = np.full_like(y, coefs[-1])
    for c in reversed(coefs[:-1]):
        out = out * y + c
    return out


# Rational fits for 0 < x < 8, variable y = x^2.
_J0_NUM = (57568490574.0, -13362590354.0, 651619640.7, -11214424.18, 77392.33017, -184.9052456)
_J0_DEN = (57568490411.0, 1029532985.0, 9494680.718, 59272.64853, 267.8532712, 1.0)
_Y0_NUM = (-2957821389.0, 7062834065.0, -512359803.6, 10879881.29, -86327.92757, 228.4622733)
_Y0_DEN = (40076544269.0, 745249964.8, 7189466.438, 47447.26470, 226.1030244, 1.0)
_J1_NUM = (72362614232.0, -7895059235.0, 242396853.1, -2972611.439, 15704.48260, -30.16036606)
_J1_DEN = (144725228442.0, 2300535178.0, 18583304.74, 99447.43394, 376.9991397, 1.0)
_Y1_NUM = (-0.4900604943e13, 0.1275274390e13, -0.5153438139e11, 0.7349264551e9, -0.4237922726e7, 0.8511937935e4)
_Y1_DEN = (0.2499580570e14, 0.4244419664e12, 0.3733650367e10, 0.2245904002e8, 0.1020426050e6, 0.3549632885e3, 1.0)

# Hankel asymptotic modulus/phase polynomials for x >= 8, variable y = (8/x)^2.
_P0 = (1.0, -0.1098628627e-2, 0.2734510407e-4, -0.2073370639e-5, 0.2093887211e-6)
_Q0 = (-0.1562499995e-1, 0.1430488765e-3, -0.6911147651e-5, 0.7621095161e-6, -0.9349945152e-7)
_P1 = (1.0, 0.183105e-2, -0.3516396496e-4, 0.2457520174e-5, -0.240337019e-6)
_Q1 = (0.04687499995, -0.2002690873e-3, 0.8449199096e-5, -0.88228987e-6, 0.105787412e-6)


def _as_positive(x: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)):
        raise KernelDomainError(f"{name} requires x > 0, got min {np.min(arr) if arr.size else arr}")
    return arr


def _j0_small(x: np.ndarray) -> np.ndarray:
    y = x * x
    return _poly(y, _J0_NUM) / _poly(y, _J0_DEN)


def _j1_small(x: np.ndarray) -> np.ndarray:
    y = x * x
    return x * _poly(y, _J1_NUM) / _poly(y, _J1_DEN)


def _large(x: np.ndarray, p: Tuple[float, ...], q: Tuple[float, ...], shift: float):
    z = SWITCH / x
    y = z * z
    phase = x - shift
    amp = np.sqrt(TWO_OVER_PI / x)
    pp = _poly(y, p)
    qq = z * _poly(y, q)
    cos_t = np.cos(phase)
    sin_t = np.sin(phase)
    return amp * (cos_t * pp - sin_t * qq), amp * (sin_t * pp + cos_t * qq)


def bessel_j0y0(x: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """Return (J0(x), Y0(x)) for x > 0."""
    scalar = np.ndim(x) == 0
    arr = np.atleast_1d(_as_positive(x, "bessel_j0y0"))
    j0 = np.empty_like(arr)
    y0 = np.empty_like(arr)

    small = arr < SWITCH
    if np.any(small):
        xs = arr[small]
        j = _j0_small(xs)
        j0[small] = j
        y0[small] = _poly(xs * xs, _Y0_NUM) / _poly(xs * xs, _Y0_DEN) + TWO_OVER_PI * j * np.log(xs)
    if np.any(~small):
        j0[~small], y0[~small] = _large(arr[~small], _P0, _Q0, PI_OVER_4)

    if scalar:
        return float(j0[0]), float(y0[0])
    return j0.reshape(np.shape(x)), y0.reshape(np.shape(x))


def bessel_j1y1(x: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """Return (J1(x), Y1(x)) for x > 0."""
    scalar = np.ndim(x) == 0
    arr = np.atleast_1d(_as_positive(x, "bessel_j1y1"))
    j1 = np.empty_like(arr)
    y1 = np.empty_like(arr)

    small = arr < SWITCH
    if np.any(small):
        xs = arr[small]
        j = _j1_small(xs)
        j1[small] = j
        y1[small] = (
            xs * _poly(xs * xs, _Y1_NUM) / _poly(xs * xs, _Y1_DEN)
            + TWO_OVER_PI * (j * np.log(xs) - 1.0 / xs)
        )
    if np.any(~small):
        j1[~small], y1[~small] = _large(arr[~small], _P1, _Q1, THREE_PI_OVER_4)

    if scalar:
        return float(j1[0]), float(y1[0])
    return j1.reshape(np.shape(x)), y1.reshape(np.shape(x))


def bessel_j0(x: ArrayLike) -> ArrayLike:
    """J0 alone; defined at x = 0 (and for negative x by evenness)."""
    scalar = np.ndim(x) == 0
    arr = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    out = np.ones_like(arr)
    pos = arr > 0.0
    if np.any(pos):
        out[pos] = bessel_j0y0(arr[pos])[0]
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def hankel1_0(x: ArrayLike):
    """H0^(1)(x) = J0 + i Y0."""
    j0, y0 = bessel_j0y0(x)
    return np.asarray(j0) + 1j * np.asarray(y0) if np.ndim(x) else complex(j0, y0)


def hankel1_1(x: ArrayLike):
    """H1^(1)(x) = J1 + i Y1."""
    j1, y1 = bessel_j1y1(x)
    return np.asarray(j1) + 1j * np.asarray(y1) if np.ndim(x) else complex(j1, y1)


def _separation(p, q) -> Tuple[np.ndarray, np.ndarray]:
    diff = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    dist = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(dist == 0.0):
        raise SingularityError("kernel evaluated at coincident points; use the self-term path")
    return diff, dist


def green(k: float, p, q):
    """Free-space Green's function (i/4) H0^(1)(k|p - q|).

    Args:
        k: Wavenumber (> 0)
        p: Point(s), shape (..., 2)
        q: Point(s), shape (..., 2)

    Returns:
        Complex value(s) broadcast over the leading dimensions of p and q
    """
    _, dist = _separation(p, q)
    return 0.25j * hankel1_0(k * dist)


def green_normal_derivative(k: float, p, q_surface, slope):
    """Normal-derivative kernel (ik/4) H1^(1)(kd) n'.(q - p) / d.

    The normal is the unit upward normal n' = (-h', 1)/sqrt(1 + h'^2) of the
    surface at q. With p directly above q on a flat surface the value is
    -(ik/4) H1^(1)(kd). This is the derivative of `green` with respect to p
    along n' (equivalently minus the derivative with respect to q).
    """
    diff, dist = _separation(p, q_surface)
    slope = np.asarray(slope, dtype=float)
    norm = np.sqrt(1.0 + slope * slope)
    n_dot = (-slope * diff[..., 0] + diff[..., 1]) / norm
    return 0.25j * k * hankel1_1(k * dist) * n_dot / dist

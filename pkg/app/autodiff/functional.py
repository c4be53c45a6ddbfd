"""Differentiable primitives that accept either plain numpy arrays or tape `Var`s.

With plain arrays every function is an ordinary numpy computation; with at least
one `Var` argument the result is recorded on that argument's tape. The forward
MOM solver and the training loop therefore run the same code.
"""
from __future__ import annotations

import warnings
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.special import expit

from app.autodiff.tape import Tape, Var
from app.core.errors import SingularMatrixError
from app.services import specfun

LuFactors = Tuple[np.ndarray, np.ndarray]


def is_tracked(*values) -> bool:
    return any(isinstance(v, Var) for v in values)


def tape_of(*values) -> Optional[Tape]:
    for v in values:
        if isinstance(v, Var):
            return v.tape
    return None


def value_of(x) -> np.ndarray:
    """Strip tracking; returns the underlying array."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unary(name: str, x, fwd, deriv):
    if isinstance(x, Var):
        xv = x.value
        out = fwd(xv)
        return x.tape.record(name, [x], out, lambda g: [g * deriv(xv, out)])
    return fwd(np.asarray(x, dtype=float))


def exp(x):
    return _unary("exp", x, np.exp, lambda v, o: o)


def log(x):
    return _unary("log", x, np.log, lambda v, o: 1.0 / v)


def sin(x):
    return _unary("sin", x, np.sin, lambda v, o: np.cos(v))


def cos(x):
    return _unary("cos", x, np.cos, lambda v, o: -np.sin(v))


def sqrt(x):
    return _unary("sqrt", x, np.sqrt, lambda v, o: 0.5 / o)


def sigmoid(x):
    return _unary("sigmoid", x, expit, lambda v, o: o * (1.0 - o))


def square(x):
    return x * x


def diag(v):
    """Vector to diagonal matrix."""
    if isinstance(v, Var):
        return v.tape.record("diag", [v], np.diag(v.value), lambda g: [np.diag(g).copy()])
    return np.diag(np.asarray(v, dtype=float))


def concatenate(parts: Sequence, axis: int = 0):
    if not is_tracked(*parts):
        return np.concatenate([np.asarray(p, dtype=float) for p in parts], axis=axis)

    tape = tape_of(*parts)
    values = [value_of(p) for p in parts]
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
    tracked = [isinstance(p, Var) for p in parts]

    def vjp(g):
        pieces = np.split(g, bounds, axis=axis)
        return [piece for piece, t in zip(pieces, tracked) if t]

    return tape.record("concat", [p for p in parts if isinstance(p, Var)], np.concatenate(values, axis=axis), vjp)


def matmul(a, b):
    if not is_tracked(a, b):
        return np.asarray(a, dtype=float) @ np.asarray(b, dtype=float)

    tape = tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av @ bv

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            if bv.ndim == 1:
                ga = np.outer(g, bv) if av.ndim == 2 else g * bv
            else:
                ga = g @ bv.T if av.ndim == 2 else bv @ g
            grads.append(ga)
        if isinstance(b, Var):
            if av.ndim == 1:
                gb = np.outer(av, g) if bv.ndim == 2 else g * av
            else:
                gb = av.T @ g
            grads.append(gb)
        return grads

    return tape.record("matmul", [v for v in (a, b) if isinstance(v, Var)], out, vjp)


# -- Hankel functions --------------------------------------------------------


def hankel0(x):
    """(Re, Im) of H0^(1)(x) = (J0, Y0), differentiable in x."""
    if not isinstance(x, Var):
        return specfun.bessel_j0y0(np.asarray(x, dtype=float))

    xv = x.value
    j0, y0 = specfun.bessel_j0y0(xv)
    j1, y1 = specfun.bessel_j1y1(xv)

    def vjp(g):
        return [-(g[0] * j1 + g[1] * y1)]

    node = x.tape.record("hankel0", [x], np.stack([j0, y0]), vjp)
    return node[0], node[1]


def hankel1(x):
    """(Re, Im) of H1^(1)(x) = (J1, Y1), differentiable in x."""
    if not isinstance(x, Var):
        return specfun.bessel_j1y1(np.asarray(x, dtype=float))

    xv = x.value
    j0, y0 = specfun.bessel_j0y0(xv)
    j1, y1 = specfun.bessel_j1y1(xv)

    def vjp(g):
        return [g[0] * (j0 - j1 / xv) + g[1] * (y0 - y1 / xv)]

    node = x.tape.record("hankel1", [x], np.stack([j1, y1]), vjp)
    return node[0], node[1]


# -- dense complex solve -------------------------------------------------------


def lu_factorize(a: np.ndarray) -> LuFactors:
    """Partial-pivoting LU of a square complex matrix.

    Raises:
        SingularMatrixError: a pivot vanished (relative to the largest pivot).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"square matrix required, got shape {a.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a)

    pivots = np.abs(np.diag(lu))
    biggest = float(pivots.max()) if pivots.size else 0.0
    rcond = float(pivots.min()) / biggest if biggest > 0.0 else 0.0
    if not np.isfinite(rcond) or rcond <= np.finfo(float).eps:
        raise SingularMatrixError(
            f"matrix of order {a.shape[0]} is numerically singular (pivot ratio {rcond:.3e})",
            rcond=rcond,
        )
    return lu, piv


def solve_adjoint(
    a: np.ndarray,
    b: np.ndarray,
    y: np.ndarray,
    y_bar: np.ndarray,
    factors: Optional[LuFactors] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Reverse rule of y = A^{-1} b on the complex carrier.

    `y_bar` packs the real-pair cotangent as g_re + i g_im. Returns
    (A_bar, b_bar) packed the same way: b_bar = A^{-H} y_bar and
    A_bar = -b_bar y^H. `factors` reuses a forward factorization.
    """
    del b
    lu = factors if factors is not None else lu_factorize(a)
    b_bar = lu_solve(lu, np.asarray(y_bar, dtype=complex), trans=2)
    a_bar = -np.outer(b_bar, np.conj(y))
    return a_bar, b_bar


def solve_pair(a_re, a_im, b_re, b_im):
    """Solve (A_re + i A_im) y = (b_re + i b_im); returns (y_re, y_im)."""
    a = value_of(a_re) + 1j * value_of(a_im)
    b = value_of(b_re) + 1j * value_of(b_im)
    factors = lu_factorize(a)
    y = lu_solve(factors, b)

    inputs = (a_re, a_im, b_re, b_im)
    if not is_tracked(*inputs):
        return y.real, y.imag

    tape = tape_of(*inputs)
    tracked = [isinstance(v, Var) for v in inputs]

    def vjp(g):
        a_bar, b_bar = solve_adjoint(a, b, y, g[0] + 1j * g[1], factors)
        grads = [a_bar.real, a_bar.imag, b_bar.real, b_bar.imag]
        return [gr for gr, t in zip(grads, tracked) if t]

    node = tape.record("solve", [v for v in inputs if isinstance(v, Var)], np.stack([y.real, y.imag]), vjp)
    return node[0], node[1]


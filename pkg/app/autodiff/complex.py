"""Complex arrays carried as (re, im) pairs of real arrays or tape variables."""
from __future__ import annotations

import numpy as np

from app.autodiff import functional as F
from app.autodiff.tape import Var


class CArray:
    """re + i*im where both parts are numpy arrays or `Var`s on one tape.

    Multiplication by a plain complex number or complex ndarray is a
    constant operation; everything else records through `functional`.
    """

    __array_ufunc__ = None

    def __init__(self, re, im=None) -> None:
        self.re = re
        self.im = np.zeros_like(F.value_of(re)) if im is None else im

    @classmethod
    def from_numpy(cls, z) -> "CArray":
        z = np.asarray(z, dtype=complex)
        return cls(z.real.copy(), z.imag.copy())

    @classmethod
    def expi(cls, theta) -> "CArray":
        """exp(i*theta) for real theta."""
        return cls(F.cos(theta), F.sin(theta))

    def to_numpy(self) -> np.ndarray:
        return F.value_of(self.re) + 1j * F.value_of(self.im)

    @property
    def tracked(self) -> bool:
        return F.is_tracked(self.re, self.im)

    @property
    def shape(self):
        return F.value_of(self.re).shape

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"CArray(shape={self.shape}, tracked={self.tracked})"

    def __getitem__(self, key) -> "CArray":
        return CArray(self.re[key], self.im[key])

    @staticmethod
    def _split(other):
        if isinstance(other, CArray):
            return other.re, other.im
        if isinstance(other, Var):
            return other, None
        if np.iscomplexobj(other):
            z = np.asarray(other)
            return z.real, z.imag
        return other, None

    def __add__(self, other) -> "CArray":
        o_re, o_im = self._split(other)
        return CArray(self.re + o_re, self.im if o_im is None else self.im + o_im)

    __radd__ = __add__

    def __sub__(self, other) -> "CArray":
        o_re, o_im = self._split(other)
        return CArray(self.re - o_re, self.im if o_im is None else self.im - o_im)

    def __rsub__(self, other) -> "CArray":
        return (-self) + other

    def __neg__(self) -> "CArray":
        return CArray(-self.re, -self.im)

    def __mul__(self, other) -> "CArray":
        o_re, o_im = self._split(other)
        if o_im is None:
            return CArray(self.re * o_re, self.im * o_re)
        return CArray(self.re * o_re - self.im * o_im, self.re * o_im + self.im * o_re)

    __rmul__ = __mul__

    def __matmul__(self, other: "CArray") -> "CArray":
        o_re, o_im = self._split(other)
        if o_im is None:
            return CArray(F.matmul(self.re, o_re), F.matmul(self.im, o_re))
        re = F.matmul(self.re, o_re) - F.matmul(self.im, o_im)
        im = F.matmul(self.re, o_im) + F.matmul(self.im, o_re)
        return CArray(re, im)

    def conj(self) -> "CArray":
        return CArray(self.re, -self.im)

    def abs2(self):
        return self.re * self.re + self.im * self.im

    def abs(self):
        return F.sqrt(self.abs2())

    def reshape(self, *shape) -> "CArray":
        return CArray(self.re.reshape(*shape), self.im.reshape(*shape))

    def sum(self, axis=None) -> "CArray":
        return CArray(self.re.sum(axis=axis), self.im.sum(axis=axis))


def solve(a: CArray, b: CArray) -> CArray:
    """Dense LU solve A y = b, differentiable in every tracked part of A and b."""
    y_re, y_im = F.solve_pair(a.re, a.im, b.re, b.im)
    return CArray(y_re, y_im)

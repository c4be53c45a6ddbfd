"""Second-order forward jets in one spatial variable.

A `Jet2` carries (f, f', f'') through truncated Taylor arithmetic. Each
component may itself be a tape `Var`, so jets nest inside reverse-mode
recording and the loss can be differentiated with respect to parameters that
enter through h, h' and h''.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from app.autodiff import functional as F


@dataclass
class Jet2:
    v: Any
    d1: Any
    d2: Any

    @classmethod
    def constant(cls, value) -> "Jet2":
        zero = np.zeros_like(F.value_of(value))
        return cls(value, zero, zero)

    @classmethod
    def variable(cls, x, scale: float = 1.0) -> "Jet2":
        """Independent variable x mapped to x*scale, so d1 = scale and d2 = 0."""
        x = np.asarray(x, dtype=float)
        return cls(x * scale, np.full_like(x, scale), np.zeros_like(x))

    @staticmethod
    def _lift(other) -> "Jet2":
        return other if isinstance(other, Jet2) else Jet2.constant(other)

    def __add__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return Jet2(self.v + other, self.d1, self.d2)
        return Jet2(self.v + other.v, self.d1 + other.d1, self.d2 + other.d2)

    __radd__ = __add__

    def __neg__(self) -> "Jet2":
        return Jet2(-self.v, -self.d1, -self.d2)

    def __sub__(self, other) -> "Jet2":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return Jet2(self.v * other, self.d1 * other, self.d2 * other)
        return Jet2(
            self.v * other.v,
            self.d1 * other.v + self.v * other.d1,
            self.d2 * other.v + 2.0 * (self.d1 * other.d1) + self.v * other.d2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return self * (1.0 / other)
        return self * reciprocal(other)

    def __rtruediv__(self, other) -> "Jet2":
        return reciprocal(self) * other

    def linear(self, weight, bias) -> "Jet2":
        """Affine layer applied row-wise: v @ W + b, d1 @ W, d2 @ W."""
        return Jet2(
            F.matmul(self.v, weight) + bias,
            F.matmul(self.d1, weight),
            F.matmul(self.d2, weight),
        )

    def reshape(self, *shape) -> "Jet2":
        return Jet2(self.v.reshape(*shape), self.d1.reshape(*shape), self.d2.reshape(*shape))

    def values(self):
        return F.value_of(self.v), F.value_of(self.d1), F.value_of(self.d2)


def chain(u: Jet2, f0, f1, f2) -> Jet2:
    """Compose a scalar function with known f, f', f'' evaluated at u.v.

    (f o u)' = f'(u) u', (f o u)'' = f''(u) u'^2 + f'(u) u''.
    """
    return Jet2(f0, f1 * u.d1, f2 * (u.d1 * u.d1) + f1 * u.d2)


def _elementwise(fn: Callable, d1: Callable, d2: Callable) -> Callable[[Jet2], Jet2]:
    def apply(u: Jet2) -> Jet2:
        f0 = fn(u.v)
        return chain(u, f0, d1(u.v, f0), d2(u.v, f0))

    return apply


def sigmoid(u: Jet2) -> Jet2:
    s = F.sigmoid(u.v)
    s1 = s * (1.0 - s)
    s2 = s1 * (1.0 - 2.0 * s)
    return chain(u, s, s1, s2)


exp = _elementwise(F.exp, lambda v, f: f, lambda v, f: f)
sin = _elementwise(F.sin, lambda v, f: F.cos(v), lambda v, f: -f)
cos = _elementwise(F.cos, lambda v, f: -F.sin(v), lambda v, f: -f)
sqrt = _elementwise(F.sqrt, lambda v, f: 0.5 / f, lambda v, f: -0.25 / (f * f * f))
reciprocal = _elementwise(lambda v: 1.0 / v, lambda v, f: -(f * f), lambda v, f: 2.0 * (f * f * f))

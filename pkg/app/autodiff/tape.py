"""Reverse-mode tape over real numpy arrays.

Every recorded node stores its value, the indices of its parents and a
vector-Jacobian closure mapping the node's cotangent to one cotangent per
parent. Nodes are appended in creation order, so the tape is already a
topological order and `backward` is a single reverse sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Node:
    op: str
    parents: Tuple[int, ...]
    vjp: Optional[Vjp]


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast cotangent back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Single-owner recording of one computation."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self.values: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, name: str = "leaf") -> "Var":
        return self.record(name, (), np.asarray(value, dtype=float), None)

    def record(self, op: str, parents: Sequence["Var"], value, vjp: Optional[Vjp]) -> "Var":
        for p in parents:
            if p.tape is not self:
                raise ValueError(f"{op}: parent recorded on a different tape")
        index = len(self.nodes)
        self.nodes.append(Node(op, tuple(p.index for p in parents), vjp))
        arr = np.asarray(value, dtype=float)
        self.values.append(arr)
        return Var(self, index, arr)

    def backward(self, loss: "Var") -> "Gradients":
        if loss.tape is not self:
            raise ValueError("loss belongs to a different tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")

        grads: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for index in range(loss.index, -1, -1):
            g = grads[index]
            node = self.nodes[index]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                if grads[parent] is None:
                    grads[parent] = np.array(pg, dtype=float)
                else:
                    grads[parent] = grads[parent] + pg
        return Gradients(self, grads)


class Gradients:
    """Cotangents of every tape node; unreached nodes read as zeros."""

    def __init__(self, tape: Tape, grads: List[Optional[np.ndarray]]) -> None:
        self._tape = tape
        self._grads = grads

    def __getitem__(self, var: "Var") -> np.ndarray:
        g = self._grads[var.index]
        return np.zeros_like(var.value) if g is None else g

    def as_dict(self) -> Dict[int, np.ndarray]:
        return {i: (np.zeros_like(self._tape.values[i]) if g is None else g) for i, g in enumerate(self._grads)}


Operand = Union["Var", np.ndarray, float, int]


class Var:
    """Handle to a tape node. Arithmetic with plain arrays treats them as constants."""

    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int, value: np.ndarray) -> None:
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self) -> str:
        return f"Var(#{self.index}, shape={self.value.shape})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __len__(self) -> int:
        return len(self.value)

    # -- elementwise binary ops -------------------------------------------

    def _binary(self, other: Operand, op: str, fwd, d_self, d_other, reverse: bool = False) -> "Var":
        if not isinstance(other, (Var, np.ndarray, np.number, int, float)):
            return NotImplemented
        a, b = (other, self) if reverse else (self, other)
        av = a.value if isinstance(a, Var) else np.asarray(a, dtype=float)
        bv = b.value if isinstance(b, Var) else np.asarray(b, dtype=float)
        out = fwd(av, bv)
        parents = [v for v in (a, b) if isinstance(v, Var)]
        a_tracked = isinstance(a, Var)
        b_tracked = isinstance(b, Var)

        def vjp(g):
            grads = []
            if a_tracked:
                grads.append(unbroadcast(d_self(g, av, bv, out), av.shape))
            if b_tracked:
                grads.append(unbroadcast(d_other(g, av, bv, out), bv.shape))
            return grads

        return self.tape.record(op, parents, out, vjp)

    def __add__(self, other: Operand) -> "Var":
        return self._binary(other, "add", np.add, lambda g, a, b, o: g, lambda g, a, b, o: g)

    def __radd__(self, other: Operand) -> "Var":
        return self._binary(other, "add", np.add, lambda g, a, b, o: g, lambda g, a, b, o: g, reverse=True)

    def __sub__(self, other: Operand) -> "Var":
        return self._binary(other, "sub", np.subtract, lambda g, a, b, o: g, lambda g, a, b, o: -g)

    def __rsub__(self, other: Operand) -> "Var":
        return self._binary(other, "sub", np.subtract, lambda g, a, b, o: g, lambda g, a, b, o: -g, reverse=True)

    def __mul__(self, other: Operand) -> "Var":
        return self._binary(other, "mul", np.multiply, lambda g, a, b, o: g * b, lambda g, a, b, o: g * a)

    def __rmul__(self, other: Operand) -> "Var":
        return self._binary(
            other, "mul", np.multiply, lambda g, a, b, o: g * b, lambda g, a, b, o: g * a, reverse=True
        )

    def __truediv__(self, other: Operand) -> "Var":
        return self._binary(
            other, "div", np.divide, lambda g, a, b, o: g / b, lambda g, a, b, o: -g * o / b
        )

    def __rtruediv__(self, other: Operand) -> "Var":
        return self._binary(
            other, "div", np.divide, lambda g, a, b, o: g / b, lambda g, a, b, o: -g * o / b, reverse=True
        )

    def __neg__(self) -> "Var":
        return self.tape.record("neg", [self], -self.value, lambda g: [-g])

    def __pow__(self, exponent: float) -> "Var":
        if isinstance(exponent, Var):
            raise TypeError("only constant exponents are supported")
        p = float(exponent)
        x = self.value
        return self.tape.record("pow", [self], x**p, lambda g: [g * p * x ** (p - 1.0)])

    # -- linear algebra and shape ops --------------------------------------

    def __matmul__(self, other: Operand) -> "Var":
        from app.autodiff.functional import matmul

        return matmul(self, other)

    def __rmatmul__(self, other: Operand) -> "Var":
        from app.autodiff.functional import matmul

        return matmul(other, self)

    def __getitem__(self, key) -> "Var":
        x = self.value
        out = x[key]

        def vjp(g):
            full = np.zeros_like(x)
            np.add.at(full, key, g)
            return [full]

        return self.tape.record("getitem", [self], out, vjp)

    def reshape(self, *shape) -> "Var":
        src = self.value.shape
        return self.tape.record("reshape", [self], self.value.reshape(*shape), lambda g: [g.reshape(src)])

    @property
    def T(self) -> "Var":
        return self.tape.record("transpose", [self], self.value.T, lambda g: [g.T])

    def sum(self, axis: Optional[int] = None) -> "Var":
        x = self.value

        def vjp(g):
            if axis is None:
                return [np.broadcast_to(g, x.shape).copy()]
            return [np.broadcast_to(np.expand_dims(g, axis), x.shape).copy()]

        return self.tape.record("sum", [self], x.sum(axis=axis), vjp)

    def mean(self, axis: Optional[int] = None) -> "Var":
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis) * (1.0 / count)


def record(tape: Tape, op: str, parents: Sequence[Var], value, partials: Optional[Vjp]) -> Var:
    """Append a node to `tape`; `partials` maps the output cotangent to parent cotangents."""
    return tape.record(op, parents, value, partials)


def backward(tape: Tape, loss: Var) -> Gradients:
    """Reverse sweep from a scalar loss node."""
    return tape.backward(loss)

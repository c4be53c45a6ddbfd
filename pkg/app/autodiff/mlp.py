"""Fully connected sigmoid network used as the surface surrogate h(x; theta)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, List, Sequence, Tuple

import numpy as np

from app.autodiff import functional as F
from app.autodiff.jet import Jet2, sigmoid
from app.autodiff.tape import Tape

logger = logging.getLogger(__name__)

CHECKPOINT_HEADER = "# surfrecon-mlp v1"


@dataclass(frozen=True)
class MlpParams:
    """Layer weights (fan_in x fan_out) and biases plus the io normalization.

    Inputs are normalized by `half_length` (x / L in [-1, 1]); the raw network
    output is multiplied by `h_bound`.
    """

    weights: Tuple[Any, ...]
    biases: Tuple[Any, ...]
    h_bound: float = 1.0
    half_length: float = 1.0

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and paired")
        fan_in = 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = F.value_of(w).shape
            if len(shape) != 2 or shape[0] != fan_in or F.value_of(b).shape != (shape[1],):
                raise ValueError(f"layer {i}: shape {shape} does not chain from fan_in {fan_in}")
            fan_in = shape[1]
        if fan_in != 1:
            raise ValueError(f"network must end in a single output, got {fan_in}")

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.weights) - 1

    @property
    def width(self) -> int:
        return F.value_of(self.weights[0]).shape[1] if self.depth else 0

    def leaves(self) -> List[Any]:
        """Flat [W0, b0, W1, b1, ...] in storage form (arrays or tape variables)."""
        out: List[Any] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def arrays(self) -> List[np.ndarray]:
        return [F.value_of(p) for p in self.leaves()]

    def with_arrays(self, arrays: Sequence[Any]) -> "MlpParams":
        return replace(self, weights=tuple(arrays[0::2]), biases=tuple(arrays[1::2]))

    def track(self, tape: Tape) -> "MlpParams":
        """Copy whose parameters are leaves of `tape`, in `arrays()` order."""
        leaves = [tape.leaf(a, name=f"theta{i}") for i, a in enumerate(self.arrays())]
        return self.with_arrays(leaves)

    def count(self) -> int:
        return int(sum(a.size for a in self.arrays()))


def init_params(
    n_layers: int,
    width: int,
    seed: int,
    h_bound: float = 1.0,
    half_length: float = 1.0,
    output_gain: float = 1.0,
) -> MlpParams:
    """Uniform Glorot initialization with zero biases; the output layer is scaled by `output_gain`.

    Args:
        n_layers: Hidden layer count (0 gives a single affine map)
        width: Neurons per hidden layer
        seed: Seed for numpy's default generator
        h_bound: Output scale in length units
        half_length: Input normalization L
        output_gain: Multiplier on the output-layer weights
    """
    if n_layers < 0 or (n_layers > 0 and width < 1):
        raise ValueError(f"invalid network shape {n_layers}x{width}")
    rng = np.random.default_rng(seed)
    sizes = [1] + [width] * n_layers + [1]
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        if layer == n_layers:
            bound *= output_gain
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(weights), tuple(biases), float(h_bound), float(half_length))


def mlp_forward(params: MlpParams, x_normalized: Jet2) -> Jet2:
    """Propagate a jet in x_hat through the network; returns (h, h', h'') in physical units.

    `x_normalized` holds x/L with d1 = 1/L and d2 = 0, either as a vector or a
    column.
    """
    n = F.value_of(x_normalized.v).shape[0]
    z = x_normalized.reshape(n, 1)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = z.linear(w, b)
        if i < last:
            z = sigmoid(z)
    return z.reshape(n) * params.h_bound


def surface_jet(params: MlpParams, x) -> Jet2:
    """h, h', h'' of the surrogate at physical abscissae x."""
    return mlp_forward(params, Jet2.variable(x, 1.0 / params.half_length))


def evaluate_surface(params: MlpParams, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return surface_jet(params, x).values()


def save_params(params: MlpParams, path: Path) -> Path:
    """Text checkpoint: header, then per layer a shape line, weight rows and a bias row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        CHECKPOINT_HEADER,
        f"# h_bound {params.h_bound!r} half_length {params.half_length!r} layers {len(params.weights)}",
    ]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        w, b = F.value_of(w), F.value_of(b)
        lines.append(f"layer {i} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(" ".join(repr(float(v)) for v in b))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Saved %d-parameter checkpoint to %s", params.count(), path)
    return path


def load_params(path: Path) -> MlpParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not a surfrecon-mlp v1 checkpoint")

    meta = lines[1].lstrip("# ").split()
    fields = dict(zip(meta[0::2], meta[1::2]))
    n_layers = int(fields["layers"])

    weights, biases = [], []
    cursor = 2
    for i in range(n_layers):
        tag, index, rows, cols = lines[cursor].split()
        if tag != "layer" or int(index) != i:
            raise ValueError(f"{path}: expected layer {i} at line {cursor + 1}")
        rows, cols = int(rows), int(cols)
        block = lines[cursor + 1 : cursor + 1 + rows]
        weights.append(np.array([[float(v) for v in row.split()] for row in block]).reshape(rows, cols))
        biases.append(np.array([float(v) for v in lines[cursor + 1 + rows].split()]))
        cursor += rows + 2

    return MlpParams(tuple(weights), tuple(biases), float(fields["h_bound"]), float(fields["half_length"]))

"""Plot-ready CSV outputs, field files with metadata sidecars, and run manifests.

Every float is written as its shortest round-trip repr, so reading a file
back reproduces the arrays exactly.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.config import DataCase, ExperimentSpec
from app.core.errors import MetadataConflictError
from app.services.inverse_service import ObservationSet
from app.services.mom_service import Polarization
from app.services.surface_service import Grid, SurfaceRealization, from_heights, make_grid

logger = logging.getLogger(__name__)

MANIFEST_FORMATS = ("json", "kv")
META_SUFFIX = ".meta"
_GRID_TOLERANCE = 1e-9


def fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def append_csv_row(path: Path, header: Sequence[str], row: Sequence[Any]) -> Path:
    """Append one row, writing the header first if the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with path.open("a", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if new:
            writer.writerow(header)
        writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path) -> Tuple[List[str], List[List[str]]]:
    with Path(path).open("r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty CSV file")
        return header, [row for row in reader if row]


def _columns(path: Path, expected: Sequence[str]) -> Dict[str, np.ndarray]:
    header, rows = read_csv(path)
    if list(header) != list(expected):
        raise ValueError(f"{path}: header {header} does not match {list(expected)}")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


# -- surfaces -------------------------------------------------------------------------------


def write_surface(path: Path, x, h) -> Path:
    return write_csv(path, ("x", "h"), zip(np.asarray(x, dtype=float), np.asarray(h, dtype=float)))


def read_surface(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    cols = _columns(path, ("x", "h"))
    return cols["x"], cols["h"]


def grid_from_midpoints(x: np.ndarray) -> Grid:
    """Recover the uniform grid whose panel midpoints are `x`."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two midpoints to recover a grid")
    dx = np.diff(x)
    if np.ptp(dx) > _GRID_TOLERANCE * max(1.0, abs(dx[0])):
        raise ValueError("surface abscissae are not uniformly spaced")
    half_length = x.size * float(dx.mean()) / 2.0
    grid = make_grid(half_length, x.size)
    if not np.allclose(grid.midpoints, x, atol=_GRID_TOLERANCE * half_length):
        raise ValueError("surface abscissae are not centred midpoints of [-L, L]")
    return grid


def load_surface(path: Path, half_length: Optional[float] = None) -> SurfaceRealization:
    """Surface file as a realization (derivatives by finite differences)."""
    x, h = read_surface(path)
    grid = grid_from_midpoints(x)
    if half_length is not None and not math.isclose(grid.half_length, half_length, rel_tol=1e-9):
        raise MetadataConflictError(
            f"{path}: surface spans L={grid.half_length!r}, experiment expects L={half_length!r}"
        )
    return from_heights(grid, h)


# -- field data -----------------------------------------------------------------------------


def field_meta(obs: ObservationSet, seed: Optional[int] = None) -> Dict[str, Any]:
    meta: Dict[str, Any] = {
        "kind": obs.kind.value,
        "polarization": obs.polarization.value,
        "k": float(obs.k),
        "alpha": float(obs.alpha),
        "zeta": float(obs.zeta),
        "half_length": float(obs.half_length),
        "noise": float(obs.noise),
        "n_obs": obs.n_obs,
    }
    if seed is not None:
        meta["seed"] = int(seed)
    return meta


def meta_path(field_path: Path) -> Path:
    field_path = Path(field_path)
    return field_path.with_name(field_path.name + META_SUFFIX)


def write_field(path: Path, obs: ObservationSet, seed: Optional[int] = None) -> Path:
    """`x,re,im` (case A) or `x,amp` (case B) plus a `<file>.meta` key=value sidecar."""
    x = np.asarray(obs.x, dtype=float)
    if obs.kind is DataCase.FULL:
        values = np.asarray(obs.values, dtype=complex)
        write_csv(path, ("x", "re", "im"), zip(x, values.real, values.imag))
    else:
        write_csv(path, ("x", "amp"), zip(x, np.asarray(obs.values, dtype=float)))
    write_kv(meta_path(path), field_meta(obs, seed))
    return Path(path)


def read_field(path: Path) -> ObservationSet:
    sidecar = meta_path(path)
    if not sidecar.exists():
        raise FileNotFoundError(f"missing metadata sidecar {sidecar}")
    meta = read_kv(sidecar)
    kind = DataCase(meta["kind"])
    if kind is DataCase.FULL:
        cols = _columns(path, ("x", "re", "im"))
        values = cols["re"] + 1j * cols["im"]
    else:
        cols = _columns(path, ("x", "amp"))
        values = cols["amp"]
    if int(meta.get("n_obs", cols["x"].size)) != cols["x"].size:
        raise MetadataConflictError(f"{path}: {cols['x'].size} rows but metadata says n_obs={meta['n_obs']}")
    return ObservationSet(
        x=cols["x"],
        values=values,
        kind=kind,
        zeta=float(meta["zeta"]),
        k=float(meta["k"]),
        alpha=float(meta["alpha"]),
        polarization=Polarization(meta["polarization"]),
        half_length=float(meta["half_length"]),
        noise=float(meta.get("noise", 0.0)),
    )


def check_field_against_spec(obs: ObservationSet, spec: ExperimentSpec) -> None:
    """Raise MetadataConflictError listing every field-file value the experiment contradicts."""
    conflicts = []
    if obs.polarization is not spec.train.polarization:
        conflicts.append(f"polarization {obs.polarization.value} != {spec.train.polarization.value}")
    if obs.kind is not spec.train.data_case:
        conflicts.append(f"data case {obs.kind.value} != {spec.train.data_case.value}")
    checked = [
        ("k", obs.k, spec.incidence.k),
        ("alpha", obs.alpha, spec.incidence.alpha),
        ("half_length", obs.half_length, spec.surface.half_length),
    ]
    # the "height" rule ties zeta to the unknown surface
    if spec.incidence.zeta_rule == "fixed":
        checked.append(("zeta", obs.zeta, spec.incidence.zeta))
    for name, stored, wanted in checked:
        if not math.isclose(stored, wanted, rel_tol=1e-9, abs_tol=1e-12):
            conflicts.append(f"{name} {stored!r} != {wanted!r}")
    if obs.n_obs != spec.train.n_obs:
        conflicts.append(f"n_obs {obs.n_obs} != {spec.train.n_obs}")
    if conflicts:
        raise MetadataConflictError("field metadata conflicts with experiment: " + "; ".join(conflicts))


# -- manifests ------------------------------------------------------------------------------


def flatten(mapping: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Nested mapping to dotted keys."""
    flat: Dict[str, Any] = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping) and value:
            flat.update(flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def unflatten(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return nested


def write_kv(path: Path, mapping: Mapping[str, Any]) -> Path:
    """`dotted.key=<json value>` lines, sorted by key."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = flatten(mapping)
    lines = [f"{key}={json.dumps(flat[key])}" for key in sorted(flat)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_kv(path: Path) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{number}: expected key=value")
        flat[key.strip()] = json.loads(raw)
    return unflatten(flat)


def write_manifest(out_dir: Path, manifest: Mapping[str, Any], fmt_name: str = "json") -> Path:
    if fmt_name not in MANIFEST_FORMATS:
        raise ValueError(f"unknown manifest format '{fmt_name}', expected one of {MANIFEST_FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt_name == "kv":
        return write_kv(out_dir / "manifest.kv", manifest)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if path.suffix == ".kv":
        return read_kv(path)
    return json.loads(path.read_text(encoding="utf-8"))


def build_manifest(command: str, spec: ExperimentSpec, **extra: Any) -> Dict[str, Any]:
    """Resolved experiment plus command-specific entries (seeds, inputs, outputs)."""
    manifest: Dict[str, Any] = {"command": command, "spec": spec.model_dump(mode="json")}
    manifest.update(extra)
    return manifest


# -- results --------------------------------------------------------------------------------


def write_loss_history(path: Path, history: Sequence[Tuple[int, int, float]]) -> Path:
    return write_csv(path, ("iteration", "n_t", "loss"), history)


def write_reconstruction(path: Path, x, h_reconstructed, h_true=None) -> Path:
    if h_true is None:
        return write_csv(path, ("x", "h"), zip(x, h_reconstructed))
    return write_csv(path, ("x", "h", "h_true"), zip(x, h_reconstructed, h_true))


RUN_HEADER = ("run_index", "seed", "l2_error", "final_loss", "iterations", "status")
SWEEP_HEADER = ("axis", "value", "mean", "std", "n_ok", "n_failed", "std_convention")


def write_runs(path: Path, runs) -> Path:
    return write_csv(
        path,
        RUN_HEADER,
        ((r.run_index, r.seed, r.error, r.final_loss, r.iterations, r.status) for r in runs),
    )


def append_sweep_point(path: Path, point) -> Path:
    batch = point.batch
    n_ok = len(batch.errors)
    return append_csv_row(
        path,
        SWEEP_HEADER,
        (point.axis, point.label, batch.mean, batch.std, n_ok, len(batch.runs) - n_ok, batch.std_convention),
    )

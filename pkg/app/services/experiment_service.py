"""Seeded end-to-end runs, repeated-run statistics and parameter sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import ExperimentSpec
from app.core.errors import SurfReconError
from app.services import mom_service as mom
from app.services.inverse_service import ObservationSet, TrainResult, simulate_observations, train
from app.services.surface_service import SurfaceRealization, make_grid, make_surface

logger = logging.getLogger(__name__)

STD_CONVENTION = "population"
TOLERANCE_FACTOR = 2.0


@dataclass
class RunOutcome:
    run_index: int
    seed: int
    error: float
    final_loss: float
    iterations: int
    status: str = "ok"
    message: str = ""
    result: Optional[TrainResult] = field(default=None, repr=False)


@dataclass
class BatchResult:
    mean: float
    std: float
    runs: List[RunOutcome]
    std_convention: str = STD_CONVENTION

    @property
    def errors(self) -> List[float]:
        return [r.error for r in self.runs if r.status == "ok"]


@dataclass
class SweepPoint:
    axis: str
    value: Any
    batch: BatchResult

    @property
    def label(self) -> str:
        if isinstance(self.value, (tuple, list)):
            return ":".join(repr(v) for v in self.value)
        return repr(self.value)


def run_seed(spec: ExperimentSpec, run_index: int) -> int:
    return spec.seed + run_index


def build_truth(spec: ExperimentSpec, seed: int) -> SurfaceRealization:
    grid = make_grid(spec.surface.half_length, spec.panels)
    s = spec.surface
    return make_surface(grid, s.scale, s.peak_to_trough, seed, s.taper_margin)


def build_problem(spec: ExperimentSpec, truth: SurfaceRealization) -> mom.ScatterProblem:
    inc = spec.incidence
    zeta = inc.observation_height(truth.max_height)
    return mom.ScatterProblem(spec.train.polarization, inc.k, inc.alpha, zeta, truth.grid)


def simulate_data(spec: ExperimentSpec, seed: int) -> Tuple[SurfaceRealization, ObservationSet]:
    """True surface for `seed` and its (noisy) observations on the N_obs midpoints."""
    truth = build_truth(spec, seed)
    problem = build_problem(spec, truth)
    x_obs = make_grid(spec.surface.half_length, spec.train.n_obs).midpoints
    rng = np.random.default_rng((seed, 1))
    obs = simulate_observations(problem, truth, x_obs, spec.train.data_case, spec.noise, rng)
    return truth, obs


def run_single(spec: ExperimentSpec, run_index: int, log_every: int = 100, keep_result: bool = False) -> RunOutcome:
    """Generate, simulate, reconstruct and score one seed."""
    seed = run_seed(spec, run_index)
    try:
        truth, obs = simulate_data(spec, seed)
        config = spec.train.model_copy(update={"seed": seed})
        result = train(config, obs, truth, log_every=log_every)
    except SurfReconError as exc:
        logger.warning("Run %d (seed %d) failed: %s", run_index, seed, exc, exc_info=True)
        return RunOutcome(run_index, seed, math.nan, math.nan, 0, status="failed", message=str(exc))
    return RunOutcome(
        run_index,
        seed,
        float(result.error),
        result.final_loss,
        len(result.history),
        result=result if keep_result else None,
    )


def _run_payload(payload: Tuple[Dict[str, Any], int, int]) -> RunOutcome:
    spec_data, run_index, log_every = payload
    return run_single(ExperimentSpec.model_validate(spec_data), run_index, log_every)


def summarize(errors: Iterable[float]) -> Tuple[float, float]:
    """Mean and population standard deviation; order independent."""
    values = np.sort(np.asarray([e for e in errors if np.isfinite(e)], dtype=float))
    if values.size == 0:
        return math.nan, math.nan
    return float(values.mean()), float(values.std(ddof=0))


def batch_evaluate(
    spec: ExperimentSpec,
    n_runs: Optional[int] = None,
    workers: int = 1,
    log_every: int = 100,
) -> BatchResult:
    """Independent seeds spec.seed, spec.seed + 1, ...; results kept in seed order."""
    n_runs = spec.runs if n_runs is None else n_runs
    if n_runs < 1:
        raise ValueError(f"n_runs must be positive, got {n_runs}")
    if n_runs == 1:
        logger.warning("Single-run batch for '%s'; standard deviation is reported as 0", spec.name)

    if workers > 1 and n_runs > 1:
        payloads = [(spec.model_dump(mode="json"), i, log_every) for i in range(n_runs)]
        with ProcessPoolExecutor(max_workers=min(workers, n_runs)) as pool:
            runs = list(pool.map(_run_payload, payloads))
    else:
        runs = [run_single(spec, i, log_every) for i in range(n_runs)]

    mean, std = summarize(r.error for r in runs if r.status == "ok")
    failed = sum(r.status != "ok" for r in runs)
    logger.info(
        "Batch '%s': %d runs, mean l2 error %.3f%% +- %.3f%% (%s std), %d failed",
        spec.name,
        n_runs,
        mean,
        std,
        STD_CONVENTION,
        failed,
    )
    return BatchResult(mean, std, runs)


# -- sweeps ---------------------------------------------------------------------------------


def apply_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    """Copy of `spec` moved to one sweep point."""
    if axis == "noise":
        return spec.with_updates(noise=float(value))
    if axis == "height":
        return spec.with_updates(**{"surface.peak_to_trough": float(value)})
    if axis == "scale":
        scale, n_inv = value
        return spec.with_updates(**{"surface.scale": float(scale), "train.n_inv": int(n_inv)})
    if axis == "incidence":
        k_pi, alpha_pi = value
        return spec.with_updates(**{"incidence.k": math.pi * float(k_pi), "incidence.alpha": math.pi * float(alpha_pi)})
    raise ValueError(f"unknown sweep axis '{axis}'")


def sweep(
    spec: ExperimentSpec,
    axis: str,
    values: Sequence,
    n_runs: Optional[int] = None,
    workers: int = 1,
    log_every: int = 100,
    on_point: Optional[Callable[[SweepPoint], None]] = None,
) -> List[SweepPoint]:
    """batch_evaluate at each axis value; `on_point` sees each point as soon as it finishes."""
    if not values:
        raise ValueError("sweep needs at least one axis value")
    points: List[SweepPoint] = []
    for value in values:
        point_spec = apply_axis(spec, axis, value)
        logger.info("Sweep %s = %s", axis, value)
        point = SweepPoint(axis, value, batch_evaluate(point_spec, n_runs, workers, log_every))
        points.append(point)
        if on_point is not None:
            on_point(point)
    return points


def trend_flags(points: Sequence[SweepPoint], thresholds: Sequence[float] = ()) -> Dict[str, bool]:
    """Trend diagnostics over the sweep means.

    `increasing`: last mean exceeds the first. `non_decreasing`: no mean drops.
    For a noise sweep, `tolerates_<eps>` holds when no mean at noise <= eps
    exceeds TOLERANCE_FACTOR times the mean at the smallest noise level.
    """
    means = [p.batch.mean for p in points]
    flags = {
        "increasing": len(means) > 1 and means[-1] > means[0],
        "non_decreasing": all(b >= a for a, b in zip(means, means[1:])),
    }
    if points and points[0].axis == "noise":
        base = means[0]
        for eps in thresholds:
            within = [m for p, m in zip(points, means) if float(p.value) <= eps + 1e-12]
            flags[f"tolerates_{eps:g}"] = bool(within) and max(within) <= TOLERANCE_FACTOR * base
    return flags

"""Surface reconstruction: observation handling, losses, Adam and the training loop.

Each iteration draws a fresh collocation grid of N_t panels (N_obs <= N_t <=
N_inv), evaluates the surrogate's (h, h', h'') jets there, pushes them through
the tracked MOM operator and backpropagates the misfit against the observed
field interpolated onto the collocation points.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.autodiff import functional as F
from app.autodiff.complex import CArray
from app.autodiff.mlp import MlpParams, evaluate_surface, init_params, surface_jet
from app.autodiff.tape import Tape
from app.core.config import DataCase, TrainConfig
from app.core.errors import DegenerateSurfaceError, SurfReconError, TrainingDivergedError
from app.services import mom_service as mom
from app.services.surface_service import Grid, SurfaceRealization, make_grid, sample_heights

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ObservationSet:
    """Field data on the line z = zeta.

    `values` is complex psi_s for full data (case A) and |psi_s + psi_i| for
    phaseless data (case B).
    """

    x: np.ndarray
    values: np.ndarray
    kind: DataCase
    zeta: float
    k: float
    alpha: float
    polarization: mom.Polarization
    half_length: float
    noise: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DataCase(self.kind))
        object.__setattr__(self, "polarization", mom.Polarization(self.polarization))
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0.0):
            raise ValueError("observation abscissae must be a strictly increasing vector")
        if x[0] < -self.half_length or x[-1] > self.half_length:
            raise ValueError(f"observation points leave [-L, L] with L={self.half_length}")
        if np.shape(self.values) != x.shape:
            raise ValueError(f"{np.shape(self.values)} values for {x.size} observation points")
        if self.kind is DataCase.PHASELESS and np.any(np.asarray(self.values) < 0.0):
            raise ValueError("phaseless amplitudes must be non-negative")

    @property
    def n_obs(self) -> int:
        return int(np.size(self.x))

    def problem(self, grid: Grid) -> mom.ScatterProblem:
        return mom.ScatterProblem(self.polarization, self.k, self.alpha, self.zeta, grid)


@dataclass(frozen=True)
class Collocation:
    n_t: int
    grid: Grid
    x: np.ndarray
    boundary_x: np.ndarray


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class TrainResult:
    params: MlpParams
    x: np.ndarray
    h: np.ndarray
    history: List[Tuple[int, int, float]] = field(default_factory=list)
    error: Optional[float] = None

    @property
    def final_loss(self) -> float:
        return self.history[-1][2] if self.history else float("nan")

    def loss_trend(self, window: int = 50) -> float:
        """Ratio of mean loss over the last window to the first window (< 1 means decreasing)."""
        losses = np.array([row[2] for row in self.history])
        if losses.size < 2:
            return float("nan")
        w = max(1, min(window, losses.size // 2))
        return float(losses[-w:].mean() / losses[:w].mean())


# -- data ----------------------------------------------------------------------------


def sample_collocation(t: int, seed: int, config: TrainConfig, half_length: float) -> Collocation:
    """Collocation grid for iteration t, deterministic in (seed, t).

    N_t is uniform on [N_obs, N_inv]; boundary points are the first and last
    N_b/2 nodes of the N_t grid.
    """
    # stream (seed, 0, t) never meets the noise stream (seed, 1)
    rng = np.random.default_rng((seed, 0, t))
    n_t = int(rng.integers(config.n_obs, config.n_inv, endpoint=True))
    grid = make_grid(half_length, n_t)
    j = np.arange(config.n_boundary // 2)
    boundary = np.concatenate([-half_length + j * grid.dx, half_length - j * grid.dx])
    return Collocation(n_t, grid, grid.midpoints, boundary)


def interpolate_observations(obs: ObservationSet, targets) -> np.ndarray:
    """Piecewise-linear (hat function) interpolation; constant beyond the outermost points."""
    targets = np.asarray(targets, dtype=float)
    values = np.asarray(obs.values)
    if np.iscomplexobj(values):
        return np.interp(targets, obs.x, values.real) + 1j * np.interp(targets, obs.x, values.imag)
    return np.interp(targets, obs.x, values)


def add_noise(values, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """values * (1 + epsilon * theta) with one theta ~ U[-1, 1] per point."""
    if epsilon < 0.0:
        raise ValueError(f"noise level must be non-negative, got {epsilon}")
    values = np.asarray(values)
    if epsilon == 0.0:
        return values.copy()
    theta = rng.uniform(-1.0, 1.0, size=values.shape)
    return values * (1.0 + epsilon * theta)


def simulate_observations(
    problem: mom.ScatterProblem,
    surface: SurfaceRealization,
    x_obs,
    kind: DataCase,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ObservationSet:
    """Forward-solve on `problem.grid` and sample the field at x_obs, then add noise once."""
    kind = DataCase(kind)
    x_obs = np.asarray(x_obs, dtype=float)
    psi_s = mom.simulate(problem, surface, x_obs)
    if kind is DataCase.PHASELESS:
        psi_i = mom.incident_field(problem, x_obs, np.full_like(x_obs, problem.zeta)).to_numpy()
        values = np.abs(psi_s + psi_i)
    else:
        values = psi_s
    if noise:
        values = add_noise(values, noise, rng if rng is not None else np.random.default_rng())
    return ObservationSet(
        x=x_obs,
        values=values,
        kind=kind,
        zeta=problem.zeta,
        k=problem.k,
        alpha=problem.alpha,
        polarization=problem.polarization,
        half_length=problem.grid.half_length,
        noise=float(noise),
    )


# -- losses ---------------------------------------------------------------------------


def _boundary_mse(h_boundary, targets):
    diff = h_boundary - np.asarray(targets, dtype=float)
    return (diff * diff).mean()


def loss_case_a(
    predicted: CArray,
    data,
    h_boundary,
    targets,
    field_weight: float = 1.0,
    boundary_weight: float = 1.0,
):
    """mean |psi_NN - psi_data|^2 + mean (h_NN(X_b) - h(X_b))^2."""
    residual = predicted - np.asarray(data, dtype=complex)
    return residual.abs2().mean() * field_weight + _boundary_mse(h_boundary, targets) * boundary_weight


def loss_case_b(
    predicted: CArray,
    incident,
    amplitudes,
    h_boundary,
    targets,
    field_weight: float = 1.0,
    boundary_weight: float = 1.0,
):
    """mean (|psi_NN + psi_i| - |psi_tot_data|)^2 + boundary term."""
    total = predicted + (incident if isinstance(incident, CArray) else np.asarray(incident, dtype=complex))
    residual = total.abs() - np.asarray(amplitudes, dtype=float)
    return (residual * residual).mean() * field_weight + _boundary_mse(h_boundary, targets) * boundary_weight


# -- optimizer -------------------------------------------------------------------------


def adam_step(
    params: Sequence[np.ndarray],
    gradients: Sequence[np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    if t < 1:
        raise ValueError(f"Adam step index starts at 1, got {t}")
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    new_params, new_m, new_v = [], [], []
    for block, (p, g, m, v) in enumerate(zip(params, gradients, state.m, state.v)):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient in parameter block {block}", iteration=t, block=block)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * (g * g)
        new_params.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v)


# -- training -----------------------------------------------------------------------------


def l2_error(reconstructed, truth) -> float:
    """100 * ||H_NN - H|| / ||H|| in percent."""
    reconstructed = np.asarray(reconstructed, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if reconstructed.shape != truth.shape:
        raise ValueError(f"shape mismatch {reconstructed.shape} vs {truth.shape}")
    norm = float(np.linalg.norm(truth))
    if norm == 0.0:
        raise DegenerateSurfaceError("l2 error is undefined for an all-zero true surface")
    return 100.0 * float(np.linalg.norm(reconstructed - truth)) / norm


def iteration_loss(params: MlpParams, config: TrainConfig, obs: ObservationSet, colloc: Collocation):
    """Scalar loss of one iteration, tracked if `params` holds tape variables."""
    jet = surface_jet(params, np.concatenate([colloc.x, colloc.boundary_x]))
    n_t = colloc.n_t
    fields = mom.SurfaceFields(jet.v[:n_t], jet.d1[:n_t], jet.d2[:n_t])
    h_boundary = jet.v[n_t:]

    problem = obs.problem(colloc.grid)
    predicted = mom.scattered_field(problem, fields)
    data = interpolate_observations(obs, colloc.x)
    targets = config.boundary_targets()
    if obs.kind is DataCase.FULL:
        return loss_case_a(predicted, data, h_boundary, targets, config.field_weight, config.boundary_weight)
    incident = mom.incident_field(problem, colloc.x, np.full_like(colloc.x, obs.zeta))
    return loss_case_b(predicted, incident, data, h_boundary, targets, config.field_weight, config.boundary_weight)


def reporting_truth(truth: SurfaceRealization, x: np.ndarray) -> np.ndarray:
    if truth.grid.n_panels == x.size and np.allclose(truth.x, x):
        return truth.h
    return sample_heights(truth, x)


def train(
    config: TrainConfig,
    observations: ObservationSet,
    true_surface: Optional[SurfaceRealization] = None,
    log_every: int = 100,
    initial: Optional[MlpParams] = None,
) -> TrainResult:
    """Fit the surrogate to `observations`; report on the N_obs midpoint grid.

    Raises:
        TrainingDivergedError: a numerical failure, tagged with the iteration.
    """
    if DataCase(config.data_case) is not observations.kind:
        raise ValueError(f"config expects case {config.data_case.value}, data is case {observations.kind.value}")
    if mom.Polarization(config.polarization) is not observations.polarization:
        raise ValueError("config and observations disagree on polarization")

    half_length = observations.half_length
    net = config.network
    params = initial or init_params(
        net.n_layers, net.width, config.seed, net.h_bound, half_length, net.output_gain
    )
    state = AdamState.zeros_like(params.arrays())
    history: List[Tuple[int, int, float]] = []

    logger.info(
        "Training %s case %s: %dx%d network (%d parameters), %d iterations, N_t in [%d, %d]",
        observations.polarization.value,
        observations.kind.value,
        params.depth,
        params.width,
        params.count(),
        config.iterations,
        config.n_obs,
        config.n_inv,
    )

    for t in range(1, config.iterations + 1):
        colloc = sample_collocation(t, config.seed, config, half_length)
        tape = Tape()
        tracked = params.track(tape)
        try:
            loss = iteration_loss(tracked, config, observations, colloc)
        except SurfReconError as exc:
            raise TrainingDivergedError(str(exc), iteration=t) from exc
        loss_value = float(F.value_of(loss))
        if not np.isfinite(loss_value):
            raise TrainingDivergedError(f"loss became {loss_value}", iteration=t)

        grads = tape.backward(loss)
        gradients = [grads[leaf] for leaf in tracked.leaves()]
        del tape, tracked
        arrays, state = adam_step(params.arrays(), gradients, state, t, config.learning_rate)
        params = params.with_arrays(arrays)
        history.append((t, colloc.n_t, loss_value))

        if t == 1 or t % max(1, log_every) == 0 or t == config.iterations:
            logger.info("iteration %d/%d: N_t=%d loss=%.6e", t, config.iterations, colloc.n_t, loss_value)

    x_report = make_grid(half_length, config.n_obs).midpoints
    h_report, _, _ = evaluate_surface(params, x_report)
    error = None
    if true_surface is not None:
        error = l2_error(h_report, reporting_truth(true_surface, x_report))
        logger.info("Reconstruction l2 error: %.3f%%", error)
    return TrainResult(params, x_report, h_report, history, error)

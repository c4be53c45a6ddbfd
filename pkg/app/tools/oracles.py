"""Self-checks run by the `validate` command.

Each check returns a dict with 'name', 'error' (worst observed value),
'tolerance', 'valid' (error < tolerance) and a readable 'detail'.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List

import numpy as np

from app.autodiff import CArray, Tape, init_params, solve, surface_jet
from app.autodiff import functional as F
from app.core.config import DataCase, NetworkSpec, TrainConfig
from app.services import mom_service as mom
from app.services.inverse_service import iteration_loss, sample_collocation, simulate_observations
from app.services.specfun import EULER_GAMMA, bessel_j0y0, bessel_j1y1, hankel1_0
from app.services.surface_service import flat_surface, from_function, make_grid

logger = logging.getLogger(__name__)

Check = Callable[[], Dict]


def _result(name: str, error: float, tolerance: float, what: str) -> Dict:
    valid = bool(np.isfinite(error) and error < tolerance)
    return {
        "name": name,
        "error": float(error),
        "tolerance": tolerance,
        "valid": valid,
        "detail": f"{what} {error:.3e} (tolerance {tolerance:g})",
    }


def ascending_series_h0(x: float, terms: int = 60) -> complex:
    """H0^(1)(x) from the ascending power series of J0 and Y0."""
    q = 0.25 * x * x
    term, harmonic = 1.0, 0.0
    j0 = 1.0
    y0_tail = 0.0
    for m in range(1, terms):
        term *= -q / (m * m)
        harmonic += 1.0 / m
        j0 += term
        y0_tail -= harmonic * term
    y0 = (2.0 / math.pi) * ((math.log(0.5 * x) + EULER_GAMMA) * j0 + y0_tail)
    return complex(j0, y0)


def check_wronskian() -> Dict:
    x = np.geomspace(0.05, 500.0, 2000)
    j0, y0 = bessel_j0y0(x)
    j1, y1 = bessel_j1y1(x)
    residual = np.max(np.abs(j1 * y0 - j0 * y1 - 2.0 / (np.pi * x)))
    return _result("wronskian", float(residual), 1e-6, "max |J1 Y0 - J0 Y1 - 2/(pi x)|")


def check_hankel_series() -> Dict:
    x = np.linspace(0.1, 8.0, 80)
    ours = hankel1_0(x)
    series = np.array([ascending_series_h0(float(v)) for v in x])
    return _result("hankel_series", float(np.max(np.abs(ours - series))), 1e-6, "max |H0 - series|")


def flat_plate_error(polarization: mom.Polarization, n_panels: int = 256, half_length: float = 8.0) -> float:
    """Relative rms deviation from the image-method reflection over the interior half."""
    grid = make_grid(half_length, n_panels)
    problem = mom.ScatterProblem(polarization, 2.0 * np.pi, -np.pi / 4.0, 0.5, grid)
    x = grid.midpoints
    psi = mom.simulate(problem, flat_surface(grid), x)
    sign = -1.0 if problem.polarization is mom.Polarization.TE else 1.0
    expected = sign * np.exp(1j * problem.k * (np.cos(problem.alpha) * x - np.sin(problem.alpha) * problem.zeta))
    interior = np.abs(x) <= 0.5 * half_length
    return float(np.linalg.norm(psi[interior] - expected[interior]) / np.linalg.norm(expected[interior]))


def check_flat_plate_te() -> Dict:
    return _result("flat_plate_te", flat_plate_error(mom.Polarization.TE), 0.05, "relative rms")


def check_flat_plate_tm() -> Dict:
    return _result("flat_plate_tm", flat_plate_error(mom.Polarization.TM), 0.05, "relative rms")


def check_solve_residual(n: int = 50, seed: int = 0) -> Dict:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    y = mom.solve_linear(a, b)
    residual = np.linalg.norm(a @ y - b) / np.linalg.norm(b)
    return _result("solve_residual", float(residual), 1e-10, "||Ay - b|| / ||b||")


def solve_adjoint_error(n: int = 3, seed: int = 0, step: float = 1e-6) -> float:
    """Reverse-mode gradient of sum |A^-1 b|^2 w.r.t. A against central differences."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 2.0 * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)

    def loss(a_re, a_im):
        return float(np.sum(np.abs(np.linalg.solve(a_re + 1j * a_im, b)) ** 2))

    tape = Tape()
    a_re, a_im = tape.leaf(a.real), tape.leaf(a.imag)
    y = solve(CArray(a_re, a_im), CArray.from_numpy(b))
    grads = tape.backward(y.abs2().sum())
    analytic = np.stack([grads[a_re], grads[a_im]])

    numeric = np.zeros_like(analytic)
    for part in range(2):
        for idx in np.ndindex(n, n):
            bump = np.zeros((n, n))
            bump[idx] = step
            plus = (a.real + bump, a.imag) if part == 0 else (a.real, a.imag + bump)
            minus = (a.real - bump, a.imag) if part == 0 else (a.real, a.imag - bump)
            numeric[(part,) + idx] = (loss(*plus) - loss(*minus)) / (2.0 * step)
    return float(np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric))


def check_solve_adjoint() -> Dict:
    return _result("solve_adjoint", solve_adjoint_error(), 1e-6, "relative gradient error")


def jet_error(n_layers: int = 4, width: int = 256, n_points: int = 100, seed: int = 0) -> float:
    """Worst of the h' and h'' relative errors against central differences.

    h' is checked against differences of h and h'' against differences of the
    jet's own h'. The first layer is sharpened and the biases randomized so the
    network has curvature well above rounding level.
    """
    half_length = 8.0
    params = init_params(n_layers, width, seed, half_length=half_length, output_gain=1.0)
    rng = np.random.default_rng(seed + 1)
    arrays = params.arrays()
    arrays[0] = arrays[0] * (4.0 / np.max(np.abs(arrays[0])))
    for i in range(1, len(arrays) - 1, 2):
        arrays[i] = rng.uniform(-2.0, 2.0, arrays[i].shape)
    params = params.with_arrays(arrays)

    x = rng.uniform(-0.9 * half_length, 0.9 * half_length, n_points)
    step = 1e-4 * half_length
    _, dh, d2h = surface_jet(params, x).values()
    h_plus, dh_plus, _ = surface_jet(params, x + step).values()
    h_minus, dh_minus, _ = surface_jet(params, x - step).values()
    fd1 = (h_plus - h_minus) / (2.0 * step)
    fd2 = (dh_plus - dh_minus) / (2.0 * step)
    err1 = np.linalg.norm(dh - fd1) / np.linalg.norm(fd1)
    err2 = np.linalg.norm(d2h - fd2) / np.linalg.norm(fd2)
    return float(max(err1, err2))


def check_jet() -> Dict:
    return _result("spatial_jet", jet_error(), 1e-5, "relative derivative error")


def pipeline_gradient_error(
    polarization: mom.Polarization,
    case: DataCase,
    n_panels: int = 40,
    n_samples: int = 10,
    seed: int = 0,
    step: float = 1e-6,
) -> float:
    """Full loss gradient (network -> jets -> MOM -> solve -> loss) against central differences."""
    half_length = 2.0
    grid = make_grid(half_length, n_panels)
    truth = from_function(grid, lambda x: 0.1 * np.sin(0.5 * np.pi * x) * np.exp(-0.25 * x * x))
    problem = mom.ScatterProblem(polarization, 2.0 * np.pi, -np.pi / 4.0, 0.5, grid)
    obs = simulate_observations(problem, truth, grid.midpoints, case)
    config = TrainConfig(
        polarization=polarization,
        data_case=case,
        n_obs=n_panels,
        n_inv=n_panels,
        n_boundary=4,
        seed=seed,
        network=NetworkSpec(n_layers=2, width=32),
    )
    colloc = sample_collocation(1, seed, config, half_length)
    net = config.network
    params = init_params(net.n_layers, net.width, seed, net.h_bound, half_length, net.output_gain)

    tape = Tape()
    tracked = params.track(tape)
    grads = tape.backward(iteration_loss(tracked, config, obs, colloc))
    blocks = [grads[leaf] for leaf in tracked.leaves()]

    rng = np.random.default_rng(seed + 7)
    arrays = params.arrays()
    analytic, numeric = [], []
    for _ in range(n_samples):
        block = int(rng.integers(len(arrays)))
        idx = tuple(int(rng.integers(s)) for s in arrays[block].shape)
        values = []
        for sign in (1.0, -1.0):
            bumped = [a.copy() for a in arrays]
            bumped[block][idx] += sign * step
            values.append(float(F.value_of(iteration_loss(params.with_arrays(bumped), config, obs, colloc))))
        analytic.append(blocks[block][idx])
        numeric.append((values[0] - values[1]) / (2.0 * step))
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric))


def _pipeline_check(polarization: mom.Polarization, case: DataCase) -> Check:
    def check() -> Dict:
        error = pipeline_gradient_error(polarization, case)
        return _result(f"pipeline_gradient_{polarization.value}_{case.value}", error, 1e-5, "relative gradient error")

    return check


ORACLES: Dict[str, Check] = {
    "wronskian": check_wronskian,
    "hankel_series": check_hankel_series,
    "flat_plate_te": check_flat_plate_te,
    "flat_plate_tm": check_flat_plate_tm,
    "solve_residual": check_solve_residual,
    "solve_adjoint": check_solve_adjoint,
    "spatial_jet": check_jet,
}
for _pol in mom.Polarization:
    for _case in DataCase:
        ORACLES[f"pipeline_gradient_{_pol.value}_{_case.value}"] = _pipeline_check(_pol, _case)


def run_oracles(names: List[str] | None = None) -> List[Dict]:
    """Run the named checks (all by default); a crashing check is reported invalid."""
    selected = names or list(ORACLES)
    unknown = [n for n in selected if n not in ORACLES]
    if unknown:
        raise ValueError(f"unknown oracle(s) {unknown}; available: {sorted(ORACLES)}")
    results = []
    for name in selected:
        try:
            result = ORACLES[name]()
        except Exception as exc:
            logger.warning("Oracle '%s' raised", name, exc_info=True)
            detail = f"{type(exc).__name__}: {exc}"
            result = {"name": name, "error": None, "tolerance": None, "valid": False, "detail": detail}
        logger.info("%-28s %s  %s", name, "ok  " if result["valid"] else "FAIL", result["detail"])
        results.append(result)
    return results

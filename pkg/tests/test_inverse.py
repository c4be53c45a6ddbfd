import numpy as np
import pytest

from app.autodiff import CArray, MlpParams, Tape, init_params
from app.autodiff.mlp import evaluate_surface
from app.core.config import DataCase, NetworkSpec, TrainConfig
from app.core.errors import DegenerateSurfaceError, TrainingDivergedError
from app.core.presets import PresetManager
from app.services import mom_service as mom
from app.services.experiment_service import batch_evaluate, sweep
from app.services.inverse_service import (
    AdamState,
    ObservationSet,
    adam_step,
    add_noise,
    interpolate_observations,
    iteration_loss,
    l2_error,
    loss_case_a,
    loss_case_b,
    sample_collocation,
    simulate_observations,
    train,
)
from app.services.surface_service import from_function, make_grid
from app.tools.oracles import pipeline_gradient_error

HALF_LENGTH = 2.0
N_OBS = 24


def _truth(n=N_OBS):
    grid = make_grid(HALF_LENGTH, n)
    return from_function(grid, lambda x: 0.1 * np.sin(0.5 * np.pi * x) * np.exp(-0.25 * x * x))


def _observations(polarization="TE", case=DataCase.FULL, truth=None):
    truth = truth or _truth()
    problem = mom.ScatterProblem(polarization, 2.0 * np.pi, -np.pi / 4.0, 0.5, truth.grid)
    return simulate_observations(problem, truth, truth.grid.midpoints, case)


def _config(polarization="TE", case=DataCase.FULL, **changes):
    values = dict(
        polarization=polarization,
        data_case=case,
        n_obs=N_OBS,
        n_inv=32,
        n_boundary=4,
        iterations=5,
        network=NetworkSpec(n_layers=2, width=16),
    )
    values.update(changes)
    return TrainConfig(**values)


# -- collocation and data -----------------------------------------------------------------------


def test_collocation_fixed_size_when_bounds_meet():
    config = _config(n_inv=N_OBS)
    sizes = {sample_collocation(t, 0, config, HALF_LENGTH).n_t for t in range(1, 30)}
    assert sizes == {N_OBS}


def test_collocation_size_covers_range():
    config = _config(n_obs=10, n_inv=20)
    sizes = [sample_collocation(t, 3, config, HALF_LENGTH).n_t for t in range(1, 201)]
    assert min(sizes) == 10 and max(sizes) == 20


def test_collocation_is_deterministic_and_places_boundary_nodes():
    config = _config()
    a = sample_collocation(7, 11, config, HALF_LENGTH)
    b = sample_collocation(7, 11, config, HALF_LENGTH)
    assert a.n_t == b.n_t
    np.testing.assert_array_equal(a.x, b.x)
    dx = 2.0 * HALF_LENGTH / a.n_t
    np.testing.assert_allclose(a.boundary_x, [-2.0, -2.0 + dx, 2.0, 2.0 - dx])
    assert a.x.size == a.n_t


def test_collocation_stream_is_keyed_apart_from_noise():
    config = _config(n_obs=10, n_inv=1000)
    for t in range(1, 6):
        expected = np.random.default_rng((5, 0, t)).integers(10, 1000, endpoint=True)
        assert sample_collocation(t, 5, config, HALF_LENGTH).n_t == expected


def test_interpolation():
    obs = ObservationSet(
        x=np.array([-1.0, 0.0, 1.0]),
        values=np.array([1.0 + 1.0j, 3.0, 5.0 - 1.0j]),
        kind=DataCase.FULL,
        zeta=0.5,
        k=1.0,
        alpha=-1.0,
        polarization="TE",
        half_length=2.0,
    )
    out = interpolate_observations(obs, [-1.0, -0.5, 0.5, -1.8, 1.9])
    np.testing.assert_allclose(out, [1.0 + 1.0j, 2.0 + 0.5j, 4.0 - 0.5j, 1.0 + 1.0j, 5.0 - 1.0j])


def test_add_noise():
    values = np.linspace(1.0, 2.0, 500)
    assert add_noise(values, 0.0, np.random.default_rng(0)) is not values
    noisy = add_noise(values, 0.1, np.random.default_rng(0))
    ratio = noisy / values
    assert np.all(ratio >= 0.9) and np.all(ratio <= 1.1)
    assert ratio.min() < 0.92 and ratio.max() > 1.08
    np.testing.assert_array_equal(noisy, add_noise(values, 0.1, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        add_noise(values, -0.1, np.random.default_rng(0))


def test_observation_set_validation():
    common = dict(kind=DataCase.PHASELESS, zeta=0.5, k=1.0, alpha=-1.0, polarization="TE", half_length=2.0)
    with pytest.raises(ValueError):
        ObservationSet(x=np.array([0.0, 0.0, 1.0]), values=np.ones(3), **common)
    with pytest.raises(ValueError):
        ObservationSet(x=np.array([0.0, 3.0]), values=np.ones(2), **common)
    with pytest.raises(ValueError):
        ObservationSet(x=np.array([0.0, 1.0]), values=np.array([1.0, -0.1]), **common)


def test_phaseless_data_is_total_field_amplitude():
    full = _observations(case=DataCase.FULL)
    phaseless = _observations(case=DataCase.PHASELESS)
    problem = full.problem(_truth().grid)
    incident = mom.incident_field(problem, full.x, np.full_like(full.x, full.zeta)).to_numpy()
    np.testing.assert_allclose(phaseless.values, np.abs(full.values + incident), rtol=1e-12)


# -- losses ---------------------------------------------------------------------------------------


def test_case_a_loss_value():
    loss = loss_case_a(CArray.from_numpy([3.0 + 4.0j]), [0.0], np.array([0.0]), [0.0])
    assert float(loss) == pytest.approx(25.0)


def test_case_b_loss_value():
    loss = loss_case_b(CArray.from_numpy([0.0]), np.array([1.0 + 0.0j]), [0.0], np.array([0.0]), [0.0])
    assert float(loss) == pytest.approx(1.0)


def test_losses_vanish_at_the_truth(rng):
    psi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    incident = np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
    boundary = np.zeros(4)
    assert float(loss_case_a(CArray.from_numpy(psi), psi, boundary, boundary)) == pytest.approx(0.0, abs=1e-28)
    amplitudes = np.abs(psi + incident)
    assert float(loss_case_b(CArray.from_numpy(psi), incident, amplitudes, boundary, boundary)) == pytest.approx(
        0.0, abs=1e-26
    )


def test_case_b_loss_ignores_global_phase(rng):
    psi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    incident = np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
    amplitudes = rng.uniform(0.5, 2.0, 8)
    boundary = np.full(2, 0.1)
    rotated = (psi + incident) * np.exp(0.7j) - incident
    a = float(loss_case_b(CArray.from_numpy(psi), incident, amplitudes, boundary, [0.0, 0.0]))
    b = float(loss_case_b(CArray.from_numpy(rotated), incident, amplitudes, boundary, [0.0, 0.0]))
    assert a == pytest.approx(b, rel=1e-12)


def test_boundary_term_and_weights():
    predicted = CArray.from_numpy([1.0j])
    loss = loss_case_a(predicted, [0.0], np.array([0.2, -0.2]), [0.0, 0.0], field_weight=2.0, boundary_weight=10.0)
    assert float(loss) == pytest.approx(2.0 + 10.0 * 0.04)


# -- optimizer --------------------------------------------------------------------------------


def test_adam_zero_gradient_keeps_parameters():
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    grads = [np.zeros(2), np.zeros((1, 1))]
    new, state = adam_step(params, grads, AdamState.zeros_like(params), 1, 1e-3)
    for p, q in zip(params, new):
        np.testing.assert_array_equal(p, q)
    assert not np.any(state.m[0])


def test_adam_first_step_moves_by_learning_rate():
    params = [np.array([1.0, -2.0, 0.0])]
    grads = [np.array([0.3, -7.0, 1e-2])]
    new, _ = adam_step(params, grads, AdamState.zeros_like(params), 1, 1e-3)
    np.testing.assert_allclose(new[0] - params[0], -1e-3 * np.sign(grads[0]), rtol=1e-5)


def test_adam_rejects_non_finite_gradients():
    params = [np.zeros(2), np.zeros(2)]
    with pytest.raises(TrainingDivergedError) as info:
        adam_step(params, [np.zeros(2), np.array([np.nan, 0.0])], AdamState.zeros_like(params), 4, 1e-3)
    assert info.value.block == 1 and info.value.iteration == 4
    with pytest.raises(ValueError):
        adam_step(params, params, AdamState.zeros_like(params), 0, 1e-3)


# -- l2 error ---------------------------------------------------------------------------------


def test_l2_error():
    assert l2_error([3.0, 4.0], [3.0, 4.0]) == 0.0
    assert l2_error([3.0, 4.5], [3.0, 4.0]) == pytest.approx(10.0)
    with pytest.raises(DegenerateSurfaceError):
        l2_error([0.1, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        l2_error([1.0], [1.0, 2.0])


# -- training ---------------------------------------------------------------------------------


@pytest.mark.parametrize("polarization", ["TE", "TM"])
@pytest.mark.parametrize("case", [DataCase.FULL, DataCase.PHASELESS])
def test_pipeline_gradient_against_finite_differences(polarization, case):
    assert pipeline_gradient_error(mom.Polarization(polarization), case) < 1e-5


def test_training_is_deterministic():
    obs = _observations()
    a = train(_config(), obs, _truth())
    b = train(_config(), obs, _truth())
    assert a.history == b.history
    assert a.h.tobytes() == b.h.tobytes()
    assert a.error == b.error


def test_training_updates_parameters_and_reports_on_observation_grid():
    obs = _observations("TM")
    config = _config("TM")
    result = train(config, obs, _truth())
    assert len(result.history) == 5
    assert [row[0] for row in result.history] == [1, 2, 3, 4, 5]
    assert all(N_OBS <= row[1] <= 32 for row in result.history)
    np.testing.assert_allclose(result.x, make_grid(HALF_LENGTH, N_OBS).midpoints)
    assert result.error is not None and np.isfinite(result.error)
    assert result.final_loss == result.history[-1][2]


def test_zero_iterations_returns_initial_surface():
    result = train(_config(iterations=0), _observations())
    assert result.history == [] and result.error is None
    assert np.isnan(result.final_loss)
    assert result.h.shape == (N_OBS,)


def test_training_rejects_mismatched_data():
    with pytest.raises(ValueError):
        train(_config(case=DataCase.PHASELESS), _observations())
    with pytest.raises(ValueError):
        train(_config("TM"), _observations("TE"))


def test_surface_crossing_the_observation_line_is_reported_as_divergence():
    lifted = MlpParams(weights=(np.array([[0.0]]),), biases=(np.array([1.0]),), half_length=HALF_LENGTH)
    with pytest.raises(TrainingDivergedError) as info:
        train(_config(), _observations(), initial=lifted)
    assert info.value.iteration == 1


@pytest.mark.slow
def test_loss_decreases_on_small_problem():
    obs = _observations()
    result = train(_config(iterations=200, learning_rate=3e-3), obs, _truth())
    assert result.loss_trend(window=20) < 0.8


def test_every_layer_receives_gradient_on_first_iteration():
    config = _config()
    obs = _observations()
    net = config.network
    params = init_params(net.n_layers, net.width, config.seed, net.h_bound, HALF_LENGTH, net.output_gain)
    colloc = sample_collocation(1, config.seed, config, HALF_LENGTH)
    tape = Tape()
    tracked = params.track(tape)
    grads = tape.backward(iteration_loss(tracked, config, obs, colloc))
    norms = [float(np.linalg.norm(grads[leaf])) for leaf in tracked.leaves()]
    assert len(norms) == 2 * (net.n_layers + 1)
    assert all(n > 0.0 for n in norms)


def test_noise_is_unbiased_over_many_draws():
    psi = 0.8 - 1.3j
    n_draws = 100_000
    noisy = add_noise(np.full(n_draws, psi), 0.1, np.random.default_rng(2))
    standard_error = 0.1 * abs(psi) / np.sqrt(3.0 * n_draws)
    assert abs(noisy.mean() - psi) < 3.0 * standard_error


@pytest.mark.slow
def test_boundary_term_alone_pulls_edges_to_targets():
    config = _config(field_weight=0.0, iterations=400, learning_rate=3e-3)
    tilted = MlpParams(weights=(np.array([[0.05]]),), biases=(np.array([0.08]),), half_length=HALF_LENGTH)
    result = train(config, _observations(), initial=tilted)
    boundary = sample_collocation(config.iterations, config.seed, config, HALF_LENGTH).boundary_x
    h, _, _ = evaluate_surface(result.params, boundary)
    assert np.max(np.abs(h - np.asarray(config.boundary_targets()))) < 1e-3 * result.params.h_bound


# -- reconstruction gates -------------------------------------------------------------------


@pytest.mark.slow
def test_desk_preset_reconstructs():
    spec = PresetManager().resolve("desk")
    batch = batch_evaluate(spec, n_runs=3)
    assert [r.status for r in batch.runs] == ["ok"] * 3
    assert batch.mean <= 12.0


@pytest.mark.nightly
def test_noisy_baseline_error_is_in_expected_band():
    spec = PresetManager().resolve("noisy_te")
    assert spec.noise == pytest.approx(0.1)
    batch = batch_evaluate(spec, n_runs=5)
    assert len(batch.errors) == 5
    assert 4.0 <= batch.mean <= 12.0


@pytest.mark.nightly
def test_error_grows_with_surface_height():
    spec = PresetManager().resolve("tall")
    means = [p.batch.mean for p in sweep(spec, "height", [0.4, 0.8, 1.2], n_runs=5)]
    assert means[0] < means[1] < means[2]
    assert means[2] >= 1.5 * means[0]


@pytest.mark.nightly
def test_phaseless_error_does_not_fall_with_noise():
    spec = PresetManager().resolve("phaseless_te")
    means = [p.batch.mean for p in sweep(spec, "noise", [0.0, 0.03, 0.1], n_runs=5)]
    assert means[0] <= means[1] <= means[2]
    assert means[2] > means[0]

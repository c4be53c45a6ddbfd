import logging
import math

import numpy as np
import pytest

from app.core.config import ExperimentSpec, IncidenceSpec, NetworkSpec, SurfaceSpec, TrainConfig
from app.services import experiment_service as experiments
from app.services.experiment_service import (
    BatchResult,
    RunOutcome,
    SweepPoint,
    apply_axis,
    batch_evaluate,
    build_problem,
    build_truth,
    run_single,
    simulate_data,
    summarize,
    sweep,
    trend_flags,
)


@pytest.fixture
def tiny_spec():
    return ExperimentSpec(
        name="tiny",
        surface=SurfaceSpec(half_length=2.0, scale=0.8, peak_to_trough=0.2, taper_margin=0.5),
        train=TrainConfig(n_obs=24, n_inv=32, n_boundary=4, iterations=3, network=NetworkSpec(n_layers=1, width=8)),
        seed=5,
    )


@pytest.fixture
def fake_runs(monkeypatch):
    """Replace the expensive single run with a seed-dependent stub."""
    calls = []

    def fake(spec, run_index, log_every=100, keep_result=False):
        calls.append((spec.name, run_index))
        seed = spec.seed + run_index
        if spec.noise > 0.3:
            return RunOutcome(run_index, seed, math.nan, math.nan, 0, status="failed", message="diverged")
        return RunOutcome(run_index, seed, 4.0 + 2.0 * run_index + 10.0 * spec.noise, 0.1, 3)

    monkeypatch.setattr(experiments, "run_single", fake)
    return calls


# -- statistics ---------------------------------------------------------------------------------


def test_summarize_population_convention():
    assert summarize([4.0, 6.0]) == (5.0, 1.0)


def test_summarize_is_order_independent(rng):
    errors = list(rng.uniform(1.0, 20.0, 37))
    shuffled = list(rng.permutation(errors))
    assert summarize(errors) == summarize(shuffled)


def test_summarize_skips_failures():
    assert summarize([4.0, math.nan, 6.0]) == (5.0, 1.0)
    mean, std = summarize([math.nan])
    assert math.isnan(mean) and math.isnan(std)


# -- batches ------------------------------------------------------------------------------------


def test_batch_uses_consecutive_seeds(tiny_spec, fake_runs):
    batch = batch_evaluate(tiny_spec, n_runs=3)
    assert [r.seed for r in batch.runs] == [5, 6, 7]
    assert batch.mean == pytest.approx(6.0)
    assert batch.std == pytest.approx(math.sqrt(8.0 / 3.0))
    assert batch.std_convention == "population"
    assert fake_runs == [("tiny", 0), ("tiny", 1), ("tiny", 2)]


def test_batch_defaults_to_spec_runs(tiny_spec, fake_runs):
    batch = batch_evaluate(tiny_spec.with_updates(runs=2))
    assert batch.errors == [4.0, 6.0]
    assert (batch.mean, batch.std) == (5.0, 1.0)


def test_single_run_batch_warns(tiny_spec, fake_runs, caplog):
    with caplog.at_level(logging.WARNING):
        batch = batch_evaluate(tiny_spec, n_runs=1)
    assert batch.std == 0.0
    assert "Single-run batch" in caplog.text


def test_failed_runs_are_kept_but_not_averaged(tiny_spec, fake_runs):
    batch = batch_evaluate(tiny_spec.with_updates(noise=0.5), n_runs=2)
    assert [r.status for r in batch.runs] == ["failed", "failed"]
    assert batch.errors == [] and math.isnan(batch.mean)


@pytest.mark.parametrize("n_runs", [-1, 0])
def test_batch_rejects_non_positive_run_count(tiny_spec, n_runs):
    with pytest.raises(ValueError):
        batch_evaluate(tiny_spec, n_runs=n_runs)


# -- sweeps -------------------------------------------------------------------------------------


def test_apply_axis(tiny_spec):
    assert apply_axis(tiny_spec, "noise", 0.1).noise == 0.1
    assert apply_axis(tiny_spec, "height", 0.6).surface.peak_to_trough == 0.6
    moved = apply_axis(tiny_spec, "scale", (0.5, 40))
    assert moved.surface.scale == 0.5 and moved.train.n_inv == 40
    oblique = apply_axis(tiny_spec, "incidence", (6.67, -1.0 / 9.0))
    assert oblique.incidence.k == pytest.approx(6.67 * math.pi)
    assert oblique.incidence.alpha == pytest.approx(-math.pi / 9.0)
    with pytest.raises(ValueError):
        apply_axis(tiny_spec, "frequency", 1.0)


def test_sweep_reports_each_point(tiny_spec, fake_runs):
    seen = []
    points = sweep(tiny_spec, "noise", [0.0, 0.1, 0.2], n_runs=2, on_point=seen.append)
    assert seen == points
    assert [p.value for p in points] == [0.0, 0.1, 0.2]
    assert [p.batch.mean for p in points] == pytest.approx([5.0, 6.0, 7.0])
    assert len(fake_runs) == 6
    with pytest.raises(ValueError):
        sweep(tiny_spec, "noise", [])


def test_sweep_point_label():
    batch = BatchResult(1.0, 0.0, [])
    assert SweepPoint("scale", (0.5, 600), batch).label == "0.5:600"
    assert SweepPoint("noise", 0.05, batch).label == "0.05"


def _points(axis, values, means):
    return [SweepPoint(axis, v, BatchResult(m, 0.0, [])) for v, m in zip(values, means)]


def test_trend_flags():
    flags = trend_flags(_points("height", [0.4, 0.8, 1.2], [5.0, 7.0, 9.0]))
    assert flags == {"increasing": True, "non_decreasing": True}
    flags = trend_flags(_points("height", [0.4, 0.8, 1.2], [5.0, 4.0, 9.0]))
    assert flags["increasing"] and not flags["non_decreasing"]


def test_noise_tolerance_flags():
    points = _points("noise", [0.0, 0.05, 0.10, 0.15, 0.20], [3.0, 4.0, 5.0, 6.0, 7.0])
    flags = trend_flags(points, thresholds=[0.15, 0.20])
    assert flags["tolerates_0.15"] is True
    assert flags["tolerates_0.2"] is False


# -- end to end ---------------------------------------------------------------------------------


def test_simulated_data_is_seeded(tiny_spec):
    truth_a, obs_a = simulate_data(tiny_spec.with_updates(noise=0.1), 5)
    truth_b, obs_b = simulate_data(tiny_spec.with_updates(noise=0.1), 5)
    assert truth_a.h.tobytes() == truth_b.h.tobytes()
    np.testing.assert_array_equal(obs_a.values, obs_b.values)
    assert obs_a.n_obs == 24 and obs_a.noise == 0.1
    _, clean = simulate_data(tiny_spec, 5)
    assert not np.array_equal(obs_a.values, clean.values)


def test_observation_height_rule(tiny_spec):
    spec = tiny_spec.with_updates(**{"incidence.zeta_rule": "height", "incidence.zeta_factor": 2.5})
    truth = build_truth(spec, 1)
    assert build_problem(spec, truth).zeta == pytest.approx(2.5 * truth.max_height)
    assert build_problem(tiny_spec, truth).zeta == 0.5
    assert IncidenceSpec().observation_height(10.0) == 0.5


def test_forward_panels_override(tiny_spec):
    assert build_truth(tiny_spec, 1).grid.n_panels == 24
    assert build_truth(tiny_spec.with_updates(forward_panels=48), 1).grid.n_panels == 48


def test_run_single_end_to_end(tiny_spec):
    a = run_single(tiny_spec, 1, keep_result=True)
    b = run_single(tiny_spec, 1)
    assert a.status == "ok" and a.seed == 6 and a.iterations == 3
    assert np.isfinite(a.error) and a.error == b.error
    assert a.result is not None and b.result is None
    assert a.final_loss == a.result.final_loss


def test_run_single_reports_failures(tiny_spec):
    outcome = run_single(tiny_spec.with_updates(**{"surface.peak_to_trough": 0.0}), 0)
    assert outcome.status == "failed"
    assert math.isnan(outcome.error)
    assert "all-zero" in outcome.message

"""Command-line front end: generate, forward, reconstruct, sweep, validate.

Lengths are in reference wavelengths; wavenumbers and grazing angles are
given as multiples of pi (--k-pi, --alpha-pi).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml
from pydantic import ValidationError

from app.autodiff import save_params
from app.core.config import ExperimentSpec
from app.core.errors import MetadataConflictError, SurfReconError
from app.core.presets import SWEEP_AXES, PresetManager, get_preset_manager
from app.core.settings import get_settings
from app.db.database import init_db
from app.services import experiment_service as experiments
from app.services import io_service as io
from app.services.inverse_service import reporting_truth, simulate_observations, train
from app.services.record_service import RunLedger
from app.services.surface_service import make_grid
from app.tools.oracles import ORACLES, run_oracles

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2

# flag dest -> dotted ExperimentSpec key (before preset resolution)
SPEC_FLAGS = {
    "polarization": "train.polarization",
    "data_case": "train.data_case",
    "n_obs": "train.n_obs",
    "n_inv": "train.n_inv",
    "n_boundary": "train.n_boundary",
    "learning_rate": "train.learning_rate",
    "iterations": "train.iterations",
    "n_layers": "train.network.n_layers",
    "width": "train.network.width",
    "h_bound": "train.network.h_bound",
    "half_length": "surface.half_length",
    "scale": "surface.scale",
    "height": "surface.peak_to_trough",
    "taper_margin": "surface.taper_margin",
    "k_pi": "incidence.k_pi",
    "alpha_pi": "incidence.alpha_pi",
    "zeta": "incidence.zeta",
    "zeta_rule": "incidence.zeta_rule",
    "noise": "noise",
    "runs": "runs",
    "seed": "seed",
    "forward_panels": "forward_panels",
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    general = common.add_argument_group("general")
    general.add_argument("--preset", help="Experiment preset id (see app/schema/presets.yaml)")
    general.add_argument("--seed", type=int, help="Base seed; run i uses seed + i")
    general.add_argument("--runs", type=int, help="Number of independent seeds")
    general.add_argument("--out-dir", type=Path, help="Output directory (default: settings out_dir / command)")
    general.add_argument("--manifest", choices=io.MANIFEST_FORMATS, default="json", help="Manifest format")
    general.add_argument("--workers", type=int, help="Worker processes for repeated runs")
    general.add_argument("--log-level", help="Logging level (default from settings)")
    general.add_argument("--no-db", action="store_true", help="Do not write the run ledger database")
    general.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted ExperimentSpec override, e.g. train.network.output_gain=0.2",
    )

    spec = common.add_argument_group("experiment")
    spec.add_argument("--polarization", choices=("TE", "TM"))
    spec.add_argument("--data-case", choices=("A", "B"), help="A: complex scattered field, B: total-field amplitude")
    spec.add_argument("--n-obs", type=int)
    spec.add_argument("--n-inv", type=int)
    spec.add_argument("--n-boundary", type=int)
    spec.add_argument("--lr", dest="learning_rate", type=float)
    spec.add_argument("--iterations", type=int)
    spec.add_argument("--layers", dest="n_layers", type=int)
    spec.add_argument("--width", type=int)
    spec.add_argument("--h-bound", type=float)
    spec.add_argument("--half-length", type=float, help="Surface spans [-L, L]")
    spec.add_argument("--scale", type=float, help="Correlation length l")
    spec.add_argument("--height", type=float, help="Peak-to-trough height")
    spec.add_argument("--taper-margin", type=float)
    spec.add_argument("--k-pi", type=float, help="Wavenumber / pi")
    spec.add_argument("--alpha-pi", type=float, help="Grazing angle / pi")
    spec.add_argument("--zeta", type=float, help="Observation height")
    spec.add_argument("--zeta-rule", choices=("fixed", "height"))
    spec.add_argument("--noise", type=float, help="Relative noise level epsilon")
    spec.add_argument("--forward-panels", type=int, help="Panels of the grid used to simulate data")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="surfrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="Generate a tapered Gaussian rough surface")

    forward = sub.add_parser("forward", parents=[common], help="Simulate field data above a surface")
    forward.add_argument("--surface", type=Path, required=True, help="Surface CSV (x,h)")

    reconstruct = sub.add_parser("reconstruct", parents=[common], help="Reconstruct a surface from field data")
    reconstruct.add_argument("--field", type=Path, help="Field CSV; omit to simulate data for each seed")
    reconstruct.add_argument("--truth", type=Path, help="True surface CSV for the l2 error")

    sweep = sub.add_parser("sweep", parents=[common], help="Mean/std error along one parameter axis")
    sweep.add_argument("axis", choices=SWEEP_AXES)
    sweep.add_argument(
        "--values",
        help="Comma-separated axis values; scale and incidence take pairs 'a:b' (default from presets)",
    )

    validate = sub.add_parser("validate", parents=[common], help="Run the numerical self-checks")
    validate.add_argument("--only", action="append", choices=sorted(ORACLES), help="Run only this check")
    return parser


# -- spec resolution --------------------------------------------------------------------------


def _parse_value(raw: str) -> Any:
    return yaml.safe_load(raw)


def spec_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested override mapping from explicit flags and --set pairs."""
    flat: Dict[str, Any] = {}
    for dest, key in SPEC_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            flat[key] = value
    for item in args.overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"--set expects KEY=VALUE, got '{item}'")
        flat[key.strip()] = _parse_value(raw)
    return io.unflatten(flat)


def resolve_spec(args: argparse.Namespace, manager: PresetManager, preset: Optional[str] = None) -> ExperimentSpec:
    return manager.resolve(args.preset or preset, spec_overrides(args))


def parse_axis_values(axis: str, raw: str) -> List[Any]:
    values: List[Any] = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if axis in ("scale", "incidence"):
            parts = item.split(":")
            if len(parts) != 2:
                raise ValueError(f"{axis} sweep values are pairs 'a:b', got '{item}'")
            first = float(parts[0])
            second = int(parts[1]) if axis == "scale" else float(parts[1])
            values.append((first, second))
        else:
            values.append(float(item))
    if not values:
        raise ValueError("sweep needs at least one axis value")
    return values


# -- commands -------------------------------------------------------------------------------


def cmd_generate(spec: ExperimentSpec, out_dir: Path, manifest_format: str = "json") -> Dict[str, Any]:
    truth = experiments.build_truth(spec, spec.seed)
    surface_path = io.write_surface(out_dir / "surface.csv", truth.x, truth.h)
    logger.info(
        "Generated %d-point surface (l=%g, peak-to-trough %g, seed %d) -> %s",
        truth.grid.n_panels,
        spec.surface.scale,
        truth.peak_to_trough,
        spec.seed,
        surface_path,
    )
    outputs = {"surface": surface_path.name}
    io.write_manifest(out_dir, io.build_manifest("generate", spec, seeds=[spec.seed], outputs=outputs), manifest_format)
    return outputs


def cmd_forward(spec: ExperimentSpec, surface_path: Path, out_dir: Path, manifest_format: str = "json") -> Dict[str, Any]:
    truth = io.load_surface(surface_path, spec.surface.half_length)
    problem = experiments.build_problem(spec, truth)
    x_obs = make_grid(spec.surface.half_length, spec.train.n_obs).midpoints
    rng = np.random.default_rng((spec.seed, 1))
    obs = simulate_observations(problem, truth, x_obs, spec.train.data_case, spec.noise, rng)
    field_path = io.write_field(out_dir / "field.csv", obs, seed=spec.seed)
    logger.info(
        "Simulated %s case %s data at zeta=%g (noise %g) -> %s",
        problem.polarization.value,
        obs.kind.value,
        problem.zeta,
        spec.noise,
        field_path,
    )
    outputs = {"field": field_path.name, "metadata": io.meta_path(field_path).name}
    manifest = io.build_manifest(
        "forward", spec, seeds=[spec.seed], inputs={"surface": str(surface_path)}, outputs=outputs
    )
    io.write_manifest(out_dir, manifest, manifest_format)
    return outputs


def cmd_reconstruct(
    spec: ExperimentSpec,
    field_path: Path,
    out_dir: Path,
    truth_path: Optional[Path] = None,
    manifest_format: str = "json",
    log_every: int = 100,
    ledger: Optional[RunLedger] = None,
) -> Dict[str, Any]:
    """Single reconstruction from a field file."""
    obs = io.read_field(field_path)
    io.check_field_against_spec(obs, spec)
    truth = io.load_surface(truth_path, spec.surface.half_length) if truth_path else None

    ledger = ledger or RunLedger(enabled=False)
    ledger.start(spec, "reconstruct")
    config = spec.train.model_copy(update={"seed": spec.seed})
    result = train(config, obs, truth, log_every=log_every)

    h_true = reporting_truth(truth, result.x) if truth is not None else None
    outputs = {
        "reconstruction": io.write_reconstruction(out_dir / "reconstruction.csv", result.x, result.h, h_true).name,
        "loss_history": io.write_loss_history(out_dir / "loss_history.csv", result.history).name,
        "params": save_params(result.params, out_dir / "params.txt").name,
    }
    summary: Dict[str, Any] = {
        "final_loss": result.final_loss,
        "loss_trend": result.loss_trend(),
        "iterations": len(result.history),
    }
    if result.error is not None:
        summary["l2_error"] = result.error
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    outputs["summary"] = "summary.json"

    ledger.add(
        [
            experiments.RunOutcome(
                0,
                spec.seed,
                result.error if result.error is not None else float("nan"),
                result.final_loss,
                len(result.history),
            )
        ]
    )
    ledger.finish()

    inputs = {"field": str(field_path)}
    if truth_path:
        inputs["truth"] = str(truth_path)
    manifest = io.build_manifest("reconstruct", spec, seeds=[spec.seed], inputs=inputs, outputs=outputs, summary=summary)
    io.write_manifest(out_dir, manifest, manifest_format)
    return summary


def cmd_batch(
    spec: ExperimentSpec,
    out_dir: Path,
    workers: int = 1,
    manifest_format: str = "json",
    log_every: int = 100,
    ledger: Optional[RunLedger] = None,
) -> Dict[str, Any]:
    """Simulate-and-reconstruct over spec.runs seeds; mean and population std of the l2 error."""
    ledger = ledger or RunLedger(enabled=False)
    ledger.start(spec, "reconstruct")
    batch = experiments.batch_evaluate(spec, spec.runs, workers, log_every)
    ledger.add(batch.runs)
    ledger.finish("done" if batch.errors else "failed")

    runs_path = io.write_runs(out_dir / "runs.csv", batch.runs)
    summary = {
        "mean_l2_error": batch.mean,
        "std_l2_error": batch.std,
        "std_convention": batch.std_convention,
        "n_ok": len(batch.errors),
        "n_runs": len(batch.runs),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    seeds = [r.seed for r in batch.runs]
    manifest = io.build_manifest(
        "reconstruct", spec, seeds=seeds, outputs={"runs": runs_path.name, "summary": "summary.json"}, summary=summary
    )
    io.write_manifest(out_dir, manifest, manifest_format)
    return summary


def cmd_sweep(
    spec: ExperimentSpec,
    axis: str,
    values: Sequence[Any],
    out_dir: Path,
    thresholds: Sequence[float] = (),
    workers: int = 1,
    manifest_format: str = "json",
    log_every: int = 100,
    ledger: Optional[RunLedger] = None,
) -> Dict[str, Any]:
    stats_path = out_dir / f"sweep_{axis}.csv"
    stats_path.unlink(missing_ok=True)
    ledger = ledger or RunLedger(enabled=False)
    ledger.start(spec, "sweep", axis)

    def flush(point: experiments.SweepPoint) -> None:
        io.append_sweep_point(stats_path, point)
        ledger.add(point.batch.runs, point.label)

    points = experiments.sweep(spec, axis, values, spec.runs, workers, log_every, on_point=flush)
    ledger.finish()

    flags = experiments.trend_flags(points, thresholds)
    summary = {
        "axis": axis,
        "points": [
            {"value": p.label, "mean": p.batch.mean, "std": p.batch.std, "n_ok": len(p.batch.errors)} for p in points
        ],
        "flags": flags,
        "noise_thresholds": list(thresholds),
        "std_convention": experiments.STD_CONVENTION,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    seeds = [experiments.run_seed(spec, i) for i in range(spec.runs)]
    manifest = io.build_manifest(
        "sweep",
        spec,
        seeds=seeds,
        axis=axis,
        values=[list(v) if isinstance(v, tuple) else v for v in values],
        outputs={"statistics": stats_path.name, "summary": "summary.json"},
        flags=flags,
    )
    io.write_manifest(out_dir, manifest, manifest_format)
    return summary


def cmd_validate(out_dir: Path, only: Optional[List[str]] = None) -> List[Dict]:
    results = run_oracles(only)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "validate.json").write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
    return results


# -- entry point ----------------------------------------------------------------------------


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _ledger(args: argparse.Namespace) -> RunLedger:
    if args.no_db:
        return RunLedger(enabled=False)
    init_db(get_settings().database_url)
    return RunLedger()


def run(args: argparse.Namespace) -> int:
    settings = get_settings()
    out_dir = Path(args.out_dir) if args.out_dir else Path(settings.out_dir) / args.command
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = args.workers or settings.workers

    if args.command == "validate":
        results = cmd_validate(out_dir, args.only)
        failed = [r["name"] for r in results if not r["valid"]]
        if failed:
            logger.error("Validation failed: %s", ", ".join(failed))
            return EXIT_FAILURE
        return EXIT_OK

    manager = get_preset_manager(settings.presets_path)
    if args.command == "sweep":
        definition = manager.sweep(args.axis)
        spec = resolve_spec(args, manager, definition.preset)
        values = parse_axis_values(args.axis, args.values) if args.values else list(definition.values)
        thresholds = manager.noise_thresholds(spec.train.data_case) if args.axis == "noise" else []
        summary = cmd_sweep(
            spec, args.axis, values, out_dir, thresholds, workers, args.manifest, settings.log_every, _ledger(args)
        )
        logger.info("Sweep flags: %s", summary["flags"])
        return EXIT_OK

    spec = resolve_spec(args, manager)
    if args.command == "generate":
        cmd_generate(spec, out_dir, args.manifest)
    elif args.command == "forward":
        cmd_forward(spec, args.surface, out_dir, args.manifest)
    elif args.field is not None:
        cmd_reconstruct(spec, args.field, out_dir, args.truth, args.manifest, settings.log_every, _ledger(args))
    else:
        if args.truth is not None:
            raise ValueError("--truth only applies together with --field")
        cmd_batch(spec, out_dir, workers, args.manifest, settings.log_every, _ledger(args))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    try:
        return run(args)
    except ValidationError as exc:
        logger.error("Invalid experiment configuration:\n%s", exc)
        return EXIT_INVALID
    except MetadataConflictError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except SurfReconError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILURE
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID if isinstance(exc, ValueError) else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

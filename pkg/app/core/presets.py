"""Experiment preset registry backed by app/schema/presets.yaml."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import yaml

from app.core.config import DataCase, ExperimentSpec
from app.core.settings import DEFAULT_PRESETS_PATH
from app.services.mom_service import Polarization

logger = logging.getLogger(__name__)

SWEEP_AXES = ("noise", "scale", "height", "incidence")


@dataclass(frozen=True)
class PresetConfig:
    """One named preset as written in the YAML file (before resolution)."""

    identifier: str
    label: str
    body: Mapping[str, Any] = field(default_factory=dict)
    description: str = ""
    extends: Optional[str] = None
    default: bool = False


@dataclass(frozen=True)
class SweepDefinition:
    axis: str
    preset: str
    values: tuple


def _deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class PresetManager:
    """Central registry for experiment presets with fallback to the default preset."""

    def __init__(self, path: Optional[Path] = None) -> None:
        self.path = Path(path) if path else DEFAULT_PRESETS_PATH
        self._configs: Dict[str, PresetConfig] = {}
        self._default_id: Optional[str] = None

        with self.path.open("r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle) or {}
        self._networks: Dict[str, Dict[str, int]] = raw.get("networks", {})
        self._noise_defaults: Dict[str, float] = raw.get("noise_defaults", {})
        self._noise_thresholds: Dict[str, List[float]] = raw.get("noise_thresholds", {})
        self._sweeps: Dict[str, Dict[str, Any]] = raw.get("sweeps", {})

        for identifier, entry in (raw.get("presets") or {}).items():
            entry = dict(entry)
            self.register_config(
                PresetConfig(
                    identifier=identifier,
                    label=entry.pop("label", identifier),
                    description=entry.pop("description", ""),
                    extends=entry.pop("extends", None),
                    default=bool(entry.pop("default", False)),
                    body=entry,
                )
            )
        logger.debug("Loaded %d presets from %s", len(self._configs), self.path)

    def register_config(self, config: PresetConfig) -> None:
        self._configs[config.identifier] = config
        if config.default or self._default_id is None:
            self._default_id = config.identifier

    @property
    def default_id(self) -> str:
        if not self._default_id:
            raise ValueError("No default preset configured.")
        return self._default_id

    def list_configs(self) -> List[PresetConfig]:
        return list(self._configs.values())

    def get_choices(self) -> List[str]:
        return [config.identifier for config in self.list_configs()]

    def get_config(self, preset_id: Optional[str]) -> PresetConfig:
        if preset_id and preset_id in self._configs:
            return self._configs[preset_id]
        if preset_id:
            logger.warning("Unknown preset '%s'; falling back to '%s'", preset_id, self.default_id)
        return self._configs[self.default_id]

    # -- tables ----------------------------------------------------------------

    def network_for(self, polarization: Polarization, case: DataCase) -> Dict[str, int]:
        key = f"{Polarization(polarization).value}-{DataCase(case).value}"
        return dict(self._networks.get(key, {}))

    def default_noise(self, case: DataCase) -> float:
        return float(self._noise_defaults.get(DataCase(case).value, 0.0))

    def noise_thresholds(self, case: DataCase) -> List[float]:
        return [float(v) for v in self._noise_thresholds.get(DataCase(case).value, [])]

    def sweep(self, axis: str) -> SweepDefinition:
        if axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis '{axis}', expected one of {SWEEP_AXES}")
        entry = self._sweeps.get(axis, {})
        values = tuple(tuple(v) if isinstance(v, list) else v for v in entry.get("values", []))
        return SweepDefinition(axis, entry.get("preset", self.default_id), values)

    # -- resolution --------------------------------------------------------------

    def _raw_body(self, preset_id: str, seen: tuple = ()) -> Dict[str, Any]:
        config = self.get_config(preset_id)
        if config.identifier in seen:
            raise ValueError(f"preset inheritance cycle through '{config.identifier}'")
        base = self._raw_body(config.extends, seen + (config.identifier,)) if config.extends else {}
        return _deep_merge(base, config.body)

    def resolve(self, preset_id: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentSpec:
        """Expand a preset (plus nested overrides) into an explicit, validated ExperimentSpec."""
        config = self.get_config(preset_id)
        body = self._raw_body(config.identifier)
        if overrides:
            body = _deep_merge(body, overrides)
        body.setdefault("name", config.identifier)

        incidence = body.setdefault("incidence", {})
        if "k_pi" in incidence:
            incidence["k"] = math.pi * float(incidence.pop("k_pi"))
        if "alpha_pi" in incidence:
            incidence["alpha"] = math.pi * float(incidence.pop("alpha_pi"))

        train = body.setdefault("train", {})
        polarization = Polarization(train.get("polarization", Polarization.TE))
        case = DataCase(train.get("data_case", DataCase.FULL))
        table = self.network_for(polarization, case)
        network = train.setdefault("network", {})
        for key in ("n_layers", "width"):
            if key in table:
                network.setdefault(key, table[key])
        if "iterations" in table:
            train.setdefault("iterations", table["iterations"])

        if body.get("noise", "default") == "default":
            body["noise"] = self.default_noise(case)

        return ExperimentSpec.model_validate(body)


@lru_cache(maxsize=4)
def get_preset_manager(path: Optional[Path] = None) -> PresetManager:
    return PresetManager(path)

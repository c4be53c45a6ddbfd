"""Validated experiment and training configuration models."""
from __future__ import annotations

import math
from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.services.mom_service import Polarization


class DataCase(str, Enum):
    FULL = "A"
    PHASELESS = "B"


class NetworkSpec(BaseModel):
    """Surrogate network shape and output scale."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_layers: int = Field(4, ge=0)
    width: int = Field(256, ge=1)
    h_bound: float = Field(1.0, gt=0.0)
    output_gain: float = Field(0.1, gt=0.0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    polarization: Polarization = Polarization.TE
    data_case: DataCase = DataCase.FULL
    n_obs: int = Field(240, ge=6)
    n_inv: int = Field(480, ge=6)
    n_boundary: int = Field(10, ge=2)
    learning_rate: float = Field(1e-3, gt=0.0)
    iterations: int = Field(1500, ge=0)
    seed: int = 0
    network: NetworkSpec = Field(default_factory=NetworkSpec)
    boundary_values: Optional[List[float]] = None
    field_weight: float = Field(1.0, ge=0.0)
    boundary_weight: float = Field(1.0, ge=0.0)

    @model_validator(mode="after")
    def _check_counts(self) -> "TrainConfig":
        if self.n_obs > self.n_inv:
            raise ValueError(f"n_obs ({self.n_obs}) must not exceed n_inv ({self.n_inv})")
        if self.n_boundary % 2:
            raise ValueError(f"n_boundary must be even, got {self.n_boundary}")
        if self.n_boundary > self.n_obs:
            raise ValueError("too many boundary points for the collocation grid")
        if self.boundary_values is not None and len(self.boundary_values) != self.n_boundary:
            raise ValueError(
                f"boundary_values has {len(self.boundary_values)} entries, expected {self.n_boundary}"
            )
        return self

    def boundary_targets(self) -> List[float]:
        return list(self.boundary_values) if self.boundary_values is not None else [0.0] * self.n_boundary


class SurfaceSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    half_length: float = Field(8.0, gt=0.0)
    scale: float = Field(2.0 / 3.0, gt=0.0)
    peak_to_trough: float = Field(0.4, ge=0.0)
    taper_margin: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def _check_margin(self) -> "SurfaceSpec":
        if self.taper_margin >= self.half_length:
            raise ValueError("taper_margin must be smaller than half_length")
        return self


class IncidenceSpec(BaseModel):
    """Plane wave k (rad per reference wavelength), grazing angle alpha and observation line."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: float = Field(2.0 * math.pi, gt=0.0)
    alpha: float = -math.pi / 4.0
    zeta: float = 0.5
    zeta_rule: Literal["fixed", "height"] = "fixed"
    zeta_factor: float = Field(2.5, gt=0.0)

    def observation_height(self, max_height: float) -> float:
        """zeta, or zeta_factor * h_max under the "height" rule."""
        if self.zeta_rule == "height":
            return self.zeta_factor * max_height
        return self.zeta


class ExperimentSpec(BaseModel):
    """Fully explicit description of one experiment (after preset resolution)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "baseline"
    surface: SurfaceSpec = Field(default_factory=SurfaceSpec)
    incidence: IncidenceSpec = Field(default_factory=IncidenceSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    noise: float = Field(0.0, ge=0.0)
    runs: int = Field(1, ge=1)
    seed: int = 0
    forward_panels: Optional[int] = Field(None, ge=6)

    @property
    def panels(self) -> int:
        """Surface grid used to simulate data; defaults to the observation count."""
        return self.forward_panels or self.train.n_obs

    def with_updates(self, **changes) -> "ExperimentSpec":
        """Copy with nested dotted-key updates, re-validated."""
        data = self.model_dump()
        for key, value in changes.items():
            node = data
            *parents, leaf = key.split(".")
            for part in parents:
                node = node[part]
            node[leaf] = value
        return ExperimentSpec.model_validate(data)

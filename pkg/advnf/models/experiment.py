import hashlib
import json
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from advnf.models.sampling import MHConfig
from advnf.models.synthetic import MOGParams, RingsParams
from advnf.models.training import TrainConfig

SYNTHETIC_KINDS = ("mog4", "mog8", "rings4")
LATTICE_KINDS = ("xy", "exy")


class DatasetSpec(BaseModel):
    kind: Literal["mog4", "mog8", "rings4", "xy", "exy"] = "mog4"
    # "component": p(x;c) is the component named by c; "mixture": the whole mixture
    conditional_target: Literal["component", "mixture"] = "component"
    mog: Optional[MOGParams] = None
    rings: Optional[RingsParams] = None
    lattice_size: int = Field(default=4, ge=3)
    J: float = 1.0
    K: float = 0.0
    temperatures: Optional[list[float]] = None
    temperature_range: tuple[float, float] = (0.25, 2.0)
    temperature_count: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def check_temperatures(self):
        grid = self.temperature_grid() if self.is_lattice else []
        if any(t <= 0.0 for t in grid):
            raise ValueError("temperature grid must be strictly positive")
        return self

    @property
    def is_lattice(self) -> bool:
        return self.kind in LATTICE_KINDS

    def temperature_grid(self) -> list[float]:
        if self.temperatures:
            return [float(t) for t in self.temperatures]
        low, high = self.temperature_range
        return [float(t) for t in np.linspace(low, high, self.temperature_count)]


class ModelSpec(BaseModel):
    # None picks the dataset default (10 synthetic, 8 lattice)
    n_layers: Optional[int] = Field(default=None, ge=1)
    hidden: Optional[list[int]] = None
    # None picks the dataset default ("none" synthetic, "sigmoid" lattice)
    projection: Optional[Literal["none", "tan", "sigmoid"]] = None
    alpha: float = Field(default=1e-4, gt=0.0, lt=0.5)
    base: Literal["normal", "uniform"] = "normal"
    uniform_bound: float = Field(default=4.0, gt=0.0)
    disc_hidden: Optional[list[int]] = None


class EnsembleSizes(BaseModel):
    train: int = Field(default=1000, ge=0)
    val: int = Field(default=200, ge=0)
    test: int = Field(default=200, ge=0)


class EvaluationSpec(BaseModel):
    n_per_condition: int = Field(default=1000, ge=1)
    energy_bins: int = Field(default=80, ge=1)
    energy_range: tuple[float, float] = (-2.0, 0.0)
    mag_bins: int = Field(default=40, ge=1)
    mag_range: tuple[float, float] = (0.0, 1.0)
    # EMD is reported in units of 10^-3 of the observable axis
    emd_report_scale: float = 1e3


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    seed: int = Field(default=0, ge=0)
    output_dir: str = "runs/experiment"
    variant: Literal["fkl", "rkl", "fkl_rkl"] = "rkl"
    adversarial: bool = True
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    model: ModelSpec = Field(default_factory=ModelSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    mcmc: MHConfig = Field(default_factory=MHConfig)
    ensemble: EnsembleSizes = Field(default_factory=EnsembleSizes)
    evaluation: EvaluationSpec = Field(default_factory=EvaluationSpec)

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def variant_label(self) -> str:
        family = "AdvNF" if self.adversarial else "CNF"
        return f"{family}({self.variant.upper().replace('_', '&')})"

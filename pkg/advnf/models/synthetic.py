from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

WEIGHT_TOLERANCE = 1e-12


class MOGComponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    weight: float = Field(gt=0.0)
    mean: tuple[float, float]
    covariance: tuple[tuple[float, float], tuple[float, float]]

    @field_validator("covariance")
    @classmethod
    def covariance_is_spd(cls, value):
        cov = np.asarray(value, dtype=np.float64)
        if not np.allclose(cov, cov.T, atol=0.0, rtol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.det(cov) <= 0.0 or np.any(np.linalg.eigvalsh(cov) <= 0.0):
            raise ValueError("covariance must be positive definite")
        return value

    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=np.float64)

    def covariance_array(self) -> np.ndarray:
        return np.asarray(self.covariance, dtype=np.float64)


class MOGParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    components: tuple[MOGComponent, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def weights_sum_to_one(self):
        total = sum(component.weight for component in self.components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        return self

    def __len__(self) -> int:
        return len(self.components)


class RingComponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    weight: float = Field(gt=0.0)
    radius: float = Field(gt=0.0)
    sigma: float = Field(gt=0.0)


class RingsParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    rings: tuple[RingComponent, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def check_rings(self):
        total = sum(ring.weight for ring in self.rings)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"ring weights sum to {total!r}, expected 1")
        radii = [ring.radius for ring in self.rings]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("ring radii must be strictly increasing")
        return self

    def __len__(self) -> int:
        return len(self.rings)


class SyntheticCondition(BaseModel):
    """Condition c of a synthetic task: the mean (MOG) or radius (rings) of one component."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["mog-mean", "ring-radius"]
    value: tuple[float, ...]
    component_index: int = Field(ge=0)

    @model_validator(mode="after")
    def value_width_matches_kind(self):
        expected = 2 if self.kind == "mog-mean" else 1
        if len(self.value) != expected:
            raise ValueError(f"{self.kind} condition needs {expected} values, got {len(self.value)}")
        return self

    def embedding(self) -> np.ndarray:
        return np.asarray(self.value, dtype=np.float64)

    def label(self) -> str:
        return str(self.component_index)

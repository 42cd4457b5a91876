import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

TWO_PI = 2.0 * math.pi


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    wrapped = np.mod(np.asarray(angles, dtype=np.float64), TWO_PI)
    # np.mod can round a tiny negative input up to exactly 2*pi
    wrapped[wrapped >= TWO_PI] = 0.0
    return wrapped


class SpinConfig(BaseModel):
    """Square lattice of planar spin angles, wrapped into [0, 2*pi) on construction."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(ge=1)
    angles: np.ndarray

    @field_validator("angles", mode="before")
    @classmethod
    def wrap(cls, value, info: ValidationInfo):
        angles = wrap_angles(np.array(value, dtype=np.float64))
        n = info.data.get("n")
        if n is not None and angles.size == n * n:
            angles = angles.reshape(n, n)
        angles.setflags(write=False)
        return angles

    @model_validator(mode="after")
    def angles_match_size(self):
        if self.angles.shape != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} angles, got shape {self.angles.shape}")
        return self

    @classmethod
    def from_flat(cls, values, n: int) -> "SpinConfig":
        return cls(n=n, angles=np.asarray(values, dtype=np.float64).reshape(n, n))

    def flat(self) -> np.ndarray:
        return self.angles.reshape(-1)


class LatticeCondition(BaseModel):
    model_config = ConfigDict(frozen=True)

    temperature: float = Field(gt=0.0)
    J: float = 1.0
    K: float = 0.0

    def embedding(self) -> np.ndarray:
        return np.asarray([self.temperature], dtype=np.float64)

    def label(self) -> str:
        return repr(float(self.temperature))

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class MHConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    burn_in_steps: int = Field(default=0, ge=0)
    thinning_steps: int = Field(default=1, ge=1)
    n_samples: int = Field(default=0, ge=0)
    proposal: Literal["uniform", "perturbation"] = "uniform"
    delta: float = Field(default=1.0, gt=0.0)
    seed: int = 0
    # burn-in given in sweeps (n*n steps each) when burn_in_steps is left at 0
    burn_in_sweeps: int = Field(default=100, ge=0)

    def resolved_burn_in(self, lattice_size: int) -> int:
        if self.burn_in_steps > 0:
            return self.burn_in_steps
        return self.burn_in_sweeps * lattice_size * lattice_size


class IMHResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    chain: np.ndarray
    accepted_count: int = Field(ge=0)
    total_count: int = Field(ge=0)
    # proposals whose log q or log p was non-finite; counted as rejections in total_count
    invalid_count: int = Field(default=0, ge=0)

    @property
    def acceptance_rate(self) -> float:
        if self.total_count == 0:
            return 0.0
        return 100.0 * self.accepted_count / self.total_count

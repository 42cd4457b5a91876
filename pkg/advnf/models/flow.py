from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class FlowSpec(BaseModel):
    """Architecture hyperparameters stored in every checkpoint header."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=2)
    cond_dim: int = Field(ge=1)
    n_layers: int = Field(ge=1)
    hidden: tuple[int, ...] = (32, 32)
    mask_kind: Literal["alternate", "checkerboard"] = "alternate"
    lattice_size: Optional[int] = Field(default=None, ge=2)
    projection: Literal["none", "tan", "sigmoid"] = "none"
    alpha: float = Field(default=1e-4, gt=0.0, lt=0.5)
    base: Literal["normal", "uniform"] = "normal"
    # half-width of the uniform base box
    uniform_bound: float = Field(default=4.0, gt=0.0)
    # fixed shift added to the last layer's output under the tan projection, whose
    # inverse only accepts values >= tan(alpha)
    tan_offset: float = Field(default=3.0, gt=0.0)

    @model_validator(mode="after")
    def lattice_masks_need_size(self):
        if self.mask_kind == "checkerboard":
            if self.lattice_size is None or self.lattice_size**2 != self.dim:
                raise ValueError("checkerboard masks need lattice_size**2 == dim")
        return self


class DiscriminatorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    cond_dim: int = Field(ge=1)
    hidden: tuple[int, ...] = (64, 64, 64, 64, 8)
    # "circular" feeds (cos, sin) of every angle instead of the raw coordinates
    features: Literal["raw", "circular"] = "raw"

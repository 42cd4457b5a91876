from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LossWeights(BaseModel):
    """Weights of the adversarial, reverse-KL and forward-KL terms."""

    model_config = ConfigDict(frozen=True)

    lambda_adv: float = Field(default=0.0, ge=0.0)
    lambda_rkl: float = Field(default=0.0, ge=0.0)
    lambda_fkl: float = Field(default=0.0, ge=0.0)

    def is_zero(self) -> bool:
        return self.lambda_adv == 0.0 and self.lambda_rkl == 0.0 and self.lambda_fkl == 0.0

    def with_adv(self, lambda_adv: float) -> "LossWeights":
        return self.model_copy(update={"lambda_adv": float(lambda_adv)})

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(
            lambda_adv=self.lambda_adv * factor,
            lambda_rkl=self.lambda_rkl * factor,
            lambda_fkl=self.lambda_fkl * factor,
        )


class Phase1Config(BaseModel):
    weights: Optional[LossWeights] = None
    max_epochs: int = Field(default=500, ge=0)
    # patience <= 0 disables early stopping
    patience: int = 10
    tolerance: float = Field(default=1e-3, ge=0.0)
    # used when there is no data to define an epoch (pure reverse-KL runs)
    steps_per_epoch: Optional[int] = Field(default=None, ge=1)
    validation_draws: int = Field(default=1024, ge=1)

    @model_validator(mode="after")
    def check_weights(self):
        if self.weights is None:
            return self
        if self.weights.lambda_adv != 0.0:
            raise ValueError("phase 1 runs with lambda_adv = 0")
        if self.weights.lambda_rkl <= 0.0 and self.weights.lambda_fkl <= 0.0:
            raise ValueError("phase 1 needs lambda_rkl > 0 or lambda_fkl > 0")
        return self


class Phase2Config(BaseModel):
    weights: Optional[LossWeights] = None
    iterations: int = Field(default=20000, ge=0)
    # (iteration, lambda_adv) steps; empty means weights.lambda_adv throughout
    lambda1_schedule: list[tuple[int, float]] = Field(default_factory=list)
    snapshot_iterations: list[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_schedule(self):
        values = [value for _, value in self.lambda1_schedule]
        starts = [start for start, _ in self.lambda1_schedule]
        if any(value < 0.0 for value in values):
            raise ValueError("lambda1 schedule values must be >= 0")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("lambda1 schedule must be non-increasing")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("lambda1 schedule iterations must be strictly increasing")
        if self.lambda1_schedule and self.lambda1_schedule[0][0] != 0:
            raise ValueError("lambda1 schedule must start at iteration 0")
        return self


class TrainConfig(BaseModel):
    phase1: Phase1Config = Field(default_factory=Phase1Config)
    phase2: Phase2Config = Field(default_factory=Phase2Config)
    batch_size: int = Field(default=256, ge=1)
    gen_lr: float = Field(default=1e-4, gt=0.0)
    # phase-2 generator rate; None keeps gen_lr
    gen_lr_phase2: Optional[float] = Field(default=None, gt=0.0)
    disc_lr: float = Field(default=5e-5, gt=0.0)
    lr_decay_boundaries: list[float] = Field(default_factory=lambda: [0.5, 0.75])
    lr_decay_factor: float = Field(default=0.5, gt=0.0)
    seed: int = 0
    checkpoint_every: int = Field(default=0, ge=0)

    def phase2_gen_lr(self) -> float:
        return self.gen_lr_phase2 if self.gen_lr_phase2 is not None else self.gen_lr


class TraceRow(BaseModel):
    phase: int
    iteration: int
    lambda1: float
    lambda2: float
    lambda3: float
    loss_total: float
    loss_fkl: Optional[float] = None
    loss_rkl: Optional[float] = None
    loss_adv: Optional[float] = None
    lr_gen: float
    lr_disc: Optional[float] = None


TRACE_COLUMNS = tuple(TraceRow.model_fields)

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Histogram(BaseModel):
    model_config = ConfigDict(frozen=True)

    edges: tuple[float, ...]
    masses: tuple[float, ...]
    # values that fell outside the edges and were counted in the edge bins
    clamped: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.masses) != len(self.edges) - 1:
            raise ValueError("a histogram needs len(edges) - 1 masses")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("histogram edges must be strictly ascending")
        if any(mass < 0.0 for mass in self.masses):
            raise ValueError("histogram masses must be nonnegative")
        return self

    @property
    def total(self) -> float:
        return float(sum(self.masses))

    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=np.float64)

    def bin_widths(self) -> np.ndarray:
        return np.diff(np.asarray(self.edges, dtype=np.float64))

    def centers(self) -> np.ndarray:
        edges = np.asarray(self.edges, dtype=np.float64)
        return 0.5 * (edges[:-1] + edges[1:])

    def normalized(self) -> "Histogram":
        total = self.total
        if total <= 0.0:
            raise ValueError("cannot normalize an empty histogram")
        return self.model_copy(update={"masses": tuple(float(m) / total for m in self.masses)})


class ConditionMetrics(BaseModel):
    variant: str
    condition: str
    nll: Optional[float] = None
    ar: Optional[float] = None
    ol_energy: Optional[float] = None
    emd_energy: Optional[float] = None
    ol_mag: Optional[float] = None
    emd_mag: Optional[float] = None
    # EMD in raw bin units (no bin-width scaling)
    emd_energy_bins: Optional[float] = None
    emd_mag_bins: Optional[float] = None
    mode_occupancy: Optional[list[float]] = None


REPORT_COLUMNS = ("variant", "condition", "nll", "ar", "ol_energy", "emd_energy", "ol_mag", "emd_mag")
SUMMARY_FIELDS = ("nll", "ar", "ol_energy", "emd_energy", "ol_mag", "emd_mag", "emd_energy_bins", "emd_mag_bins")


class MetricsReport(BaseModel):
    variant: str
    rows: list[ConditionMetrics]
    mean: dict[str, Optional[float]] = Field(default_factory=dict)
    std: dict[str, Optional[float]] = Field(default_factory=dict)

    def summary_row(self) -> ConditionMetrics:
        return ConditionMetrics(variant=self.variant, condition="mean", **self.mean)

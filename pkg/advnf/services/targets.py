"""Target densities known up to a constant, in array and graph form.

``log_prob`` works on numpy batches and may return non-finite values (used
for filtering draws and by independent Metropolis-Hastings); ``log_prob_graph``
builds the same quantity on the autodiff graph for the reverse-KL gradient.
"""

from typing import Protocol, Union

import numpy as np

from advnf.autodiff.graph import Node
from advnf.models.lattice import LatticeCondition
from advnf.models.synthetic import MOGParams, RingsParams, SyntheticCondition
from advnf.services.lattice_service import lattice_service
from advnf.services.synthetic_service import synthetic_service

Condition = Union[SyntheticCondition, LatticeCondition]


class TargetDensity(Protocol):
    def log_prob(self, x: np.ndarray, c: Condition) -> np.ndarray: ...

    def log_prob_graph(self, x: Node, c: Condition) -> Node: ...


class SyntheticTarget:
    def __init__(self, params: Union[MOGParams, RingsParams], mode: str = "component"):
        self.params = params
        self.mode = mode

    def log_prob(self, x: np.ndarray, c: SyntheticCondition) -> np.ndarray:
        points = np.atleast_2d(np.asarray(x, dtype=np.float64))
        radii = np.hypot(points[:, 0], points[:, 1])
        values = np.full(len(points), -np.inf)
        # the rings density is singular at the origin; report those points as -inf
        valid = radii > 0.0 if isinstance(self.params, RingsParams) else np.ones(len(points), bool)
        if valid.any():
            if self.mode == "mixture":
                values[valid] = synthetic_service.log_density(points[valid], self.params)
            else:
                values[valid] = synthetic_service.conditional_log_density(points[valid], c, self.params)
        return values

    def log_prob_graph(self, x: Node, c: SyntheticCondition) -> Node:
        if self.mode == "mixture":
            return synthetic_service.log_density_graph(x, self.params)
        return synthetic_service.conditional_log_density_graph(x, c, self.params)


class BoltzmannTarget:
    """Unnormalized Boltzmann density exp(-E/T) of flattened lattice configurations."""

    def __init__(self, lattice_size: int):
        self.lattice_size = lattice_size

    def log_prob(self, x: np.ndarray, c: LatticeCondition) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return lattice_service.log_boltzmann_flat(np.atleast_2d(x), self.lattice_size, c)

    def log_prob_graph(self, x: Node, c: LatticeCondition) -> Node:
        return lattice_service.log_boltzmann_graph(x, self.lattice_size, c)

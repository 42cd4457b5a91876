import math
from functools import lru_cache
from typing import Union

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.core.errors import ContractError
from advnf.models.lattice import LatticeCondition, SpinConfig

MIN_LATTICE_SIZE = 3

Spins = Union[SpinConfig, np.ndarray]


def _angles(s: Spins) -> np.ndarray:
    angles = s.angles if isinstance(s, SpinConfig) else np.asarray(s, dtype=np.float64)
    if angles.ndim < 2 or angles.shape[-1] != angles.shape[-2]:
        raise ContractError(f"expected (..., n, n) angles, got shape {angles.shape}")
    if angles.shape[-1] < MIN_LATTICE_SIZE:
        raise ContractError(f"lattice side must be >= {MIN_LATTICE_SIZE}, got {angles.shape[-1]}")
    return angles


def _scalar(values: np.ndarray):
    return float(values) if np.ndim(values) == 0 else values


@lru_cache(maxsize=32)
def neighbour_tables(n: int) -> dict[str, np.ndarray]:
    """Flat (row-major) indices of the right, down and down-right neighbour of every site."""
    rows, cols = np.divmod(np.arange(n * n), n)
    right = rows * n + (cols + 1) % n
    down = ((rows + 1) % n) * n + cols
    diagonal = ((rows + 1) % n) * n + (cols + 1) % n
    return {"right": right, "down": down, "diagonal": diagonal}


class LatticeService:
    def bond_sum(self, s: Spins):
        """Sum over the 2 n^2 nearest-neighbour bonds of cos(theta_i - theta_j)."""
        a = _angles(s)
        right = np.roll(a, -1, axis=-1)
        down = np.roll(a, -1, axis=-2)
        return _scalar(np.sum(np.cos(a - right) + np.cos(a - down), axis=(-2, -1)))

    def plaquette_sum(self, s: Spins):
        """Sum over the n^2 plaquettes of cos(tl - tr + br - bl)."""
        a = _angles(s)
        top_right = np.roll(a, -1, axis=-1)
        bottom_left = np.roll(a, -1, axis=-2)
        bottom_right = np.roll(bottom_left, -1, axis=-1)
        return _scalar(np.sum(np.cos(a - top_right + bottom_right - bottom_left), axis=(-2, -1)))

    def xy_energy(self, s: Spins, J: float):
        return _scalar(-J * np.asarray(self.bond_sum(s)))

    def exy_energy(self, s: Spins, J: float, K: float):
        energy = np.asarray(self.xy_energy(s, J))
        if K != 0.0:
            energy = energy - K * np.asarray(self.plaquette_sum(s))
        return _scalar(energy)

    def log_boltzmann_unnorm(self, s: Spins, c: LatticeCondition):
        return _scalar(-np.asarray(self.exy_energy(s, c.J, c.K)) / c.temperature)

    def magnetization(self, s: Spins):
        a = _angles(s)
        mean_cos = np.mean(np.cos(a), axis=(-2, -1))
        mean_sin = np.mean(np.sin(a), axis=(-2, -1))
        return _scalar(np.hypot(mean_cos, mean_sin))

    def energy_per_site(self, s: Spins, J: float, K: float):
        n = _angles(s).shape[-1]
        return _scalar(np.asarray(self.exy_energy(s, J, K)) / (n * n))

    # -- Flat-batch helpers used by the flow and MCMC code --------------

    def log_boltzmann_flat(self, theta: np.ndarray, n: int, c: LatticeCondition) -> np.ndarray:
        """Unnormalized log density of a (B, n*n) batch of flattened configurations."""
        theta = np.asarray(theta, dtype=np.float64)
        return np.asarray(
            self.log_boltzmann_unnorm(theta.reshape(theta.shape[:-1] + (n, n)), c), dtype=np.float64
        )

    def log_boltzmann_graph(self, theta: Node, n: int, c: LatticeCondition) -> Node:
        """Graph version of :meth:`log_boltzmann_flat` for the pathwise reverse-KL gradient."""
        if n < MIN_LATTICE_SIZE:
            raise ContractError(f"lattice side must be >= {MIN_LATTICE_SIZE}, got {n}")
        tables = neighbour_tables(n)
        right = graph.take(theta, tables["right"], axis=1)
        down = graph.take(theta, tables["down"], axis=1)
        bonds = graph.reduce_sum(
            graph.add(graph.cos(graph.sub(theta, right)), graph.cos(graph.sub(theta, down))), axis=1
        )
        energy = graph.mul(bonds, -c.J)
        if c.K != 0.0:
            diagonal = graph.take(theta, tables["diagonal"], axis=1)
            plaquette = graph.cos(graph.sub(graph.add(graph.sub(theta, right), diagonal), down))
            energy = graph.sub(energy, graph.mul(graph.reduce_sum(plaquette, axis=1), c.K))
        return graph.mul(energy, -1.0 / c.temperature)

    def local_energy(self, angles: np.ndarray, row: int, col: int, value: float, J: float, K: float) -> float:
        """Energy of every bond and plaquette touching (row, col) with that site set to ``value``."""
        n = angles.shape[0]
        up, down = (row - 1) % n, (row + 1) % n
        left, right = (col - 1) % n, (col + 1) % n
        bonds = (
            math.cos(value - angles[row, right])
            + math.cos(value - angles[row, left])
            + math.cos(value - angles[down, col])
            + math.cos(value - angles[up, col])
        )
        energy = -J * bonds
        if K != 0.0:
            a = angles
            # the site is the tl, tr, br and bl corner of four different plaquettes
            plaquettes = (
                math.cos(value - a[row, right] + a[down, right] - a[down, col])
                + math.cos(a[row, left] - value + a[down, col] - a[down, left])
                + math.cos(a[up, left] - a[up, col] + value - a[row, left])
                + math.cos(a[up, col] - a[up, right] + a[row, right] - value)
            )
            energy -= K * plaquettes
        return energy

    def energy_delta(self, angles: np.ndarray, row: int, col: int, new_value: float, J: float, K: float) -> float:
        old_value = float(angles[row, col])
        return self.local_energy(angles, row, col, new_value, J, K) - self.local_energy(
            angles, row, col, old_value, J, K
        )


lattice_service = LatticeService()

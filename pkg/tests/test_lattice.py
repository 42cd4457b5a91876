import math

import numpy as np
import pytest

from advnf.autodiff import graph
from advnf.core.errors import ContractError
from advnf.models.lattice import TWO_PI, LatticeCondition, SpinConfig
from advnf.services.lattice_service import lattice_service


def _enumerated_energy(angles: np.ndarray, J: float, K: float) -> float:
    n = angles.shape[0]
    energy = 0.0
    for i in range(n):
        for j in range(n):
            energy -= J * math.cos(angles[i, j] - angles[i, (j + 1) % n])
            energy -= J * math.cos(angles[i, j] - angles[(i + 1) % n, j])
            energy -= K * math.cos(
                angles[i, j]
                - angles[i, (j + 1) % n]
                + angles[(i + 1) % n, (j + 1) % n]
                - angles[(i + 1) % n, j]
            )
    return energy


def test_aligned_lattice_energies():
    aligned = SpinConfig(n=4, angles=np.zeros((4, 4)))
    assert lattice_service.xy_energy(aligned, 1.0) == pytest.approx(-32.0)
    assert lattice_service.exy_energy(aligned, 1.0, 1.0) == pytest.approx(-48.0)
    assert lattice_service.energy_per_site(aligned, 1.0, 0.0) == pytest.approx(-2.0)
    assert lattice_service.magnetization(aligned) == pytest.approx(1.0)
    assert lattice_service.log_boltzmann_unnorm(aligned, LatticeCondition(temperature=1.0)) == pytest.approx(32.0)


def test_alternating_columns_cancel():
    angles = np.tile([0.0, math.pi, 0.0, math.pi], (4, 1))
    spins = SpinConfig(n=4, angles=angles)
    assert lattice_service.xy_energy(spins, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert lattice_service.magnetization(spins) == pytest.approx(0.0, abs=1e-12)


def test_energy_matches_bond_enumeration_and_is_rotation_invariant():
    angles = np.random.default_rng(0).uniform(0.0, TWO_PI, size=(5, 5))
    expected = _enumerated_energy(angles, 1.3, 0.7)
    assert lattice_service.exy_energy(angles, 1.3, 0.7) == pytest.approx(expected, abs=1e-10)

    rotated = SpinConfig(n=5, angles=angles + 1.234)
    assert lattice_service.exy_energy(rotated, 1.3, 0.7) == pytest.approx(expected, abs=1e-10)


def test_energy_is_invariant_under_lattice_symmetries():
    angles = np.random.default_rng(4).uniform(0.0, TWO_PI, size=(5, 5))
    images = {
        "translation": np.roll(angles, (2, 3), axis=(0, 1)),
        "rotation": np.rot90(angles),
        "row reflection": np.flipud(angles),
        "column reflection": np.fliplr(angles),
        "transpose": angles.T,
    }
    xy = lattice_service.xy_energy(angles, 1.0)
    exy = lattice_service.exy_energy(angles, 1.0, 0.8)
    for name, image in images.items():
        image = np.ascontiguousarray(image)
        assert lattice_service.xy_energy(image, 1.0) == pytest.approx(xy, abs=1e-10), name
        assert lattice_service.exy_energy(image, 1.0, 0.8) == pytest.approx(exy, abs=1e-10), name


def test_batched_and_graph_log_boltzmann_agree():
    rng = np.random.default_rng(1)
    batch = rng.uniform(0.0, TWO_PI, size=(3, 16))
    c = LatticeCondition(temperature=0.8, J=1.0, K=0.5)

    flat = lattice_service.log_boltzmann_flat(batch, 4, c)
    one_by_one = [lattice_service.log_boltzmann_unnorm(row.reshape(4, 4), c) for row in batch]
    assert flat == pytest.approx(one_by_one, abs=1e-10)

    node = lattice_service.log_boltzmann_graph(graph.constant(batch), 4, c)
    assert node.value == pytest.approx(flat, abs=1e-10)


def test_local_energy_delta_matches_full_difference():
    rng = np.random.default_rng(2)
    angles = rng.uniform(0.0, TWO_PI, size=(4, 4))
    for row, col, value in [(0, 0, 1.0), (3, 2, 5.5), (1, 3, 0.2)]:
        updated = angles.copy()
        updated[row, col] = value
        full = lattice_service.exy_energy(updated, 1.0, 1.0) - lattice_service.exy_energy(angles, 1.0, 1.0)
        assert lattice_service.energy_delta(angles, row, col, value, 1.0, 1.0) == pytest.approx(full, abs=1e-10)


def test_spin_config_wraps_angles():
    spins = SpinConfig.from_flat([-0.5, TWO_PI, 7.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3)
    assert spins.angles.shape == (3, 3)
    assert np.all((spins.angles >= 0.0) & (spins.angles < TWO_PI))
    assert spins.flat()[0] == pytest.approx(TWO_PI - 0.5)
    assert spins.flat()[1] == 0.0


def test_small_lattices_are_rejected():
    with pytest.raises(ContractError):
        lattice_service.xy_energy(np.zeros((2, 2)), 1.0)
    with pytest.raises(ContractError):
        lattice_service.log_boltzmann_graph(graph.constant(np.zeros((1, 4))), 2, LatticeCondition(temperature=1.0))

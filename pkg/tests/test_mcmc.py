import math

import numpy as np
import pytest
from scipy import stats

from advnf.core.errors import ContractError, NumericError
from advnf.models.lattice import TWO_PI, LatticeCondition, SpinConfig
from advnf.models.sampling import MHConfig
from advnf.services.lattice_service import lattice_service
from advnf.services.mcmc_service import mcmc_service


def _gaussian_proposal(scale: float, rng: np.random.Generator):
    def sampler(n: int):
        x = rng.normal(0.0, scale, size=n)
        return x, stats.norm.logpdf(x, 0.0, scale)

    return sampler


def test_downhill_moves_are_always_accepted():
    assert mcmc_service._accept(-1.0, 1.0, 0.999999)
    assert mcmc_service._accept(0.0, 0.5, 0.999999)
    assert not mcmc_service._accept(10.0, 1.0, 0.5)


def test_mh_step_lowers_or_keeps_energy_at_zero_temperature_limit():
    rng = np.random.default_rng(0)
    spins = SpinConfig(n=4, angles=rng.uniform(0.0, TWO_PI, size=(4, 4)))
    c = LatticeCondition(temperature=1e-9)
    energy = lattice_service.xy_energy(spins, 1.0)
    for _ in range(200):
        spins = mcmc_service.mh_step(spins, c, "perturbation", rng, delta=0.5)
        new_energy = lattice_service.xy_energy(spins, 1.0)
        assert new_energy <= energy + 1e-12
        energy = new_energy
    assert np.all((spins.angles >= 0.0) & (spins.angles < TWO_PI))


def test_zero_samples_gives_an_empty_ensemble():
    cfg = MHConfig(n_samples=0, seed=1)
    assert mcmc_service.mh_generate_array(LatticeCondition(temperature=1.0), cfg, 4).shape == (0, 4, 4)


def test_generation_is_deterministic_per_seed():
    c = LatticeCondition(temperature=0.9)
    cfg = MHConfig(burn_in_steps=50, thinning_steps=8, n_samples=5, seed=7)
    first = mcmc_service.mh_generate_array(c, cfg, 3)
    assert np.array_equal(first, mcmc_service.mh_generate_array(c, cfg, 3))
    other = mcmc_service.mh_generate_array(c, cfg.model_copy(update={"seed": 8}), 3)
    assert not np.array_equal(first, other)
    assert np.all((first >= 0.0) & (first < TWO_PI))


def test_imh_with_exact_proposal_accepts_everything():
    rng = np.random.default_rng(0)
    sampler = _gaussian_proposal(1.0, rng)
    result = mcmc_service.imh_resample(sampler, lambda x: stats.norm.logpdf(x) + 3.0, 500, rng)
    assert result.acceptance_rate == pytest.approx(100.0)
    assert result.total_count == 500


def test_imh_corrects_a_wide_gaussian_proposal():
    rng = np.random.default_rng(1)
    result = mcmc_service.imh_resample(_gaussian_proposal(2.0, rng), stats.norm.logpdf, 20_000, rng)
    assert 20.0 < result.acceptance_rate < 100.0
    assert abs(result.chain.mean()) < 0.05
    assert result.chain.std() == pytest.approx(1.0, abs=0.05)
    assert stats.kstest(result.chain, "norm").statistic < 0.03


def test_imh_rejects_non_finite_proposals():
    proposals = np.arange(5.0)
    log_q = np.zeros(5)
    log_p = np.array([-np.inf, 0.0, np.nan, 0.0, 0.0])
    result = mcmc_service.imh_chain(proposals, log_q, log_p, np.random.default_rng(0))
    assert result.invalid_count == 2
    assert result.chain.tolist() == [1.0, 1.0, 3.0, 4.0]
    assert result.accepted_count == 3
    # the leading invalid proposal is a rejection even though it leaves no chain entry
    assert result.total_count == 5
    assert result.acceptance_rate == pytest.approx(60.0)

    with pytest.raises(NumericError):
        mcmc_service.imh_chain(proposals, log_q, np.full(5, -np.inf), np.random.default_rng(0))
    with pytest.raises(ContractError):
        mcmc_service.imh_chain(proposals[:0], log_q[:0], log_p[:0], np.random.default_rng(0))


def test_perturbation_never_returns_two_pi():
    # -2**-53 wraps to a value that rounds up to exactly 2pi
    value = mcmc_service._propose(0.0, "perturbation", 1.0, 0.5 - 2.0**-54)
    assert value == 0.0
    assert mcmc_service._propose(1.0, "perturbation", 0.5, 0.75) == pytest.approx(1.25)


def _acceptance(angles: np.ndarray, site: int, draw: float, c: LatticeCondition, uniforms: np.ndarray) -> float:
    accepted = 0
    for uniform in uniforms:
        accepted += mcmc_service._update(np.array(angles), site, draw, float(uniform), c, "uniform", 1.0)
    return accepted / len(uniforms)


def test_single_site_updates_satisfy_detailed_balance():
    rng = np.random.default_rng(11)
    c = LatticeCondition(temperature=0.7, J=1.0, K=0.5)
    uniforms = (np.arange(2000) + 0.5) / 2000
    for _ in range(10):
        angles = rng.uniform(0.0, TWO_PI, size=(4, 4))
        site = int(rng.integers(16))
        row, col = divmod(site, 4)
        draw = float(rng.random())
        moved = np.array(angles)
        moved[row, col] = TWO_PI * draw

        forward = _acceptance(angles, site, draw, c, uniforms)
        backward = _acceptance(moved, site, angles[row, col] / TWO_PI, c, uniforms)
        log_p = lattice_service.log_boltzmann_unnorm(angles, c)
        log_p_moved = lattice_service.log_boltzmann_unnorm(moved, c)
        top = max(log_p, log_p_moved)
        # uniform proposals are symmetric, so the flux each way is p(s) * a(s -> s')
        assert math.exp(log_p - top) * forward == pytest.approx(math.exp(log_p_moved - top) * backward, abs=1e-3)
        assert max(forward, backward) == 1.0


def _shifted_target(x):
    return stats.norm.logpdf(x, 1.0, 1.0)


def _log_weight(x):
    return _shifted_target(x) - stats.norm.logpdf(x)


def test_imh_acceptance_matches_expected_acceptance():
    rng = np.random.default_rng(21)
    result = mcmc_service.imh_resample(_gaussian_proposal(1.0, rng), _shifted_target, 100_000, rng)

    # stationary IMH acceptance: E[min(1, w(y) / w(x))], x ~ target, y ~ proposal
    oracle_rng = np.random.default_rng(22)
    x = oracle_rng.normal(1.0, 1.0, size=1_000_000)
    y = oracle_rng.normal(0.0, 1.0, size=1_000_000)
    expected = 100.0 * float(np.mean(np.minimum(1.0, np.exp(_log_weight(y) - _log_weight(x)))))
    assert result.acceptance_rate == pytest.approx(expected, abs=1.0)


@pytest.mark.slow
def test_imh_chain_passes_ks_at_100k_draws():
    rng = np.random.default_rng(31)
    result = mcmc_service.imh_resample(_gaussian_proposal(2.0, rng), stats.norm.logpdf, 100_000, rng)
    assert len(result.chain) == 100_000
    assert stats.kstest(result.chain, "norm").statistic < 0.01


def _quadrature_energy_per_site(temperature: float, nodes: int = 48) -> float:
    """Exact <E>/N of the 3x3 XY model (J=1) by Gauss-Legendre quadrature.

    Spin (0,0) is pinned at angle 0; the other eight are a..h row by row.
    Every bond of the 3x3 torus is equivalent, so <E>/N = -2 <cos(theta_a)>.
    """
    points, weights = np.polynomial.legendre.leggauss(nodes)
    theta = math.pi * (points + 1.0)
    w = math.pi * weights
    beta = 1.0 / temperature
    bond = np.exp(beta * (np.cos(theta[:, None] - theta[None, :]) - 1.0))
    pinned = w * np.exp(beta * (np.cos(theta) - 1.0))

    def contract(v_a: np.ndarray) -> float:
        t_bdg = np.einsum("a,ab,ad,ag->bdg", v_a, bond, bond, bond, optimize=True)
        t_def = np.einsum("c,cd,ce,cf->def", pinned, bond, bond, bond, optimize=True)
        t_dgeh = np.einsum("b,bdg,be,bh->dgeh", pinned, t_bdg, bond, bond, optimize=True)
        t_degh = np.einsum("f,def,fg,fh->degh", pinned, t_def, bond, bond, optimize=True)
        return float(
            np.einsum(
                "dgeh,degh,de,dg,gh,eh,d,e,g,h->", t_dgeh, t_degh, bond, bond, bond, bond, w, w, w, w,
                optimize=True,
            )
        )

    return -2.0 * contract(pinned * np.cos(theta)) / contract(pinned)


@pytest.mark.slow
@pytest.mark.parametrize("temperature", [0.5, 1.0, 2.0])
def test_mh_energy_matches_quadrature(temperature):
    exact = _quadrature_energy_per_site(temperature)
    cfg = MHConfig(thinning_steps=9, n_samples=20_000, seed=3)
    samples = mcmc_service.mh_generate_array(LatticeCondition(temperature=temperature), cfg, 3)
    energies = lattice_service.energy_per_site(samples, 1.0, 0.0)

    batch_means = energies.reshape(20, -1).mean(axis=1)
    standard_error = batch_means.std(ddof=1) / math.sqrt(len(batch_means))
    assert abs(float(energies.mean()) - exact) < 3.0 * standard_error
    assert -2.0 < exact < 0.0

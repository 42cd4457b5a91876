import logging
import math
from typing import Callable

import numpy as np
from tqdm import tqdm

from advnf.core.config import settings
from advnf.core.errors import ContractError, NumericError
from advnf.models.lattice import TWO_PI, LatticeCondition, SpinConfig
from advnf.models.sampling import IMHResult, MHConfig
from advnf.services.lattice_service import MIN_LATTICE_SIZE, lattice_service

logger = logging.getLogger(__name__)

ProposalSampler = Callable[[int], tuple[np.ndarray, np.ndarray]]
TargetLogDensity = Callable[[np.ndarray], np.ndarray]

# random numbers for single-site updates are drawn in blocks of this many steps
_STEP_BLOCK = 4096


class MCMCService:
    def _propose(self, current: float, proposal: str, delta: float, draw: float) -> float:
        """Map a Uniform[0,1) draw to a new angle; both proposals are symmetric."""
        if proposal == "uniform":
            return TWO_PI * draw
        value = (current + delta * (2.0 * draw - 1.0)) % TWO_PI
        # a tiny negative sum rounds up to exactly 2pi
        return 0.0 if value >= TWO_PI else value

    def _accept(self, delta_energy: float, temperature: float, uniform: float) -> bool:
        if delta_energy <= 0.0:
            return True
        return uniform < math.exp(-delta_energy / temperature)

    def _update(
        self,
        angles: np.ndarray,
        site: int,
        draw: float,
        uniform: float,
        c: LatticeCondition,
        proposal: str,
        delta: float,
    ) -> bool:
        n = angles.shape[0]
        row, col = divmod(site, n)
        new_value = self._propose(float(angles[row, col]), proposal, delta, draw)
        delta_energy = lattice_service.energy_delta(angles, row, col, new_value, c.J, c.K)
        if self._accept(delta_energy, c.temperature, uniform):
            angles[row, col] = new_value
            return True
        return False

    def mh_step(
        self,
        s: SpinConfig,
        c: LatticeCondition,
        proposal: str,
        rng: np.random.Generator,
        delta: float = 1.0,
    ) -> SpinConfig:
        """One single-site Metropolis update with a symmetric proposal."""
        if s.n < MIN_LATTICE_SIZE:
            raise ContractError(f"lattice side must be >= {MIN_LATTICE_SIZE}")
        angles = np.array(s.angles, copy=True)
        site = int(rng.integers(s.n * s.n))
        draw, uniform = rng.random(2)
        self._update(angles, site, float(draw), float(uniform), c, proposal, delta)
        return SpinConfig(n=s.n, angles=angles)

    def _run_steps(
        self,
        angles: np.ndarray,
        n_steps: int,
        c: LatticeCondition,
        cfg: MHConfig,
        rng: np.random.Generator,
    ) -> int:
        n_sites = angles.size
        accepted = 0
        remaining = n_steps
        while remaining > 0:
            block = min(remaining, _STEP_BLOCK)
            sites = rng.integers(n_sites, size=block)
            draws = rng.random(block)
            uniforms = rng.random(block)
            for i in range(block):
                if self._update(angles, int(sites[i]), float(draws[i]), float(uniforms[i]), c, cfg.proposal, cfg.delta):
                    accepted += 1
            remaining -= block
        return accepted

    def mh_generate_array(self, c: LatticeCondition, cfg: MHConfig, lattice_size: int) -> np.ndarray:
        """(n_samples, n, n) configurations recorded every ``thinning_steps`` after burn-in."""
        if lattice_size < MIN_LATTICE_SIZE:
            raise ContractError(f"lattice side must be >= {MIN_LATTICE_SIZE}")
        rng = np.random.default_rng(cfg.seed)
        samples = np.empty((cfg.n_samples, lattice_size, lattice_size))
        if cfg.n_samples == 0:
            return samples
        angles = rng.uniform(0.0, TWO_PI, size=(lattice_size, lattice_size))
        burn_in = cfg.resolved_burn_in(lattice_size)
        self._run_steps(angles, burn_in, c, cfg, rng)

        accepted = 0
        for i in tqdm(
            range(cfg.n_samples),
            desc=f"MH T={c.temperature:.3f}",
            disable=not settings.SHOW_PROGRESS,
        ):
            accepted += self._run_steps(angles, cfg.thinning_steps, c, cfg, rng)
            samples[i] = angles
        logger.info(
            "MH T=%.4f: %d samples, burn-in %d steps, thinning %d, local acceptance %.1f%%",
            c.temperature,
            cfg.n_samples,
            burn_in,
            cfg.thinning_steps,
            100.0 * accepted / (cfg.n_samples * cfg.thinning_steps),
        )
        return samples

    def mh_generate(self, c: LatticeCondition, cfg: MHConfig, lattice_size: int) -> list[SpinConfig]:
        return [
            SpinConfig(n=lattice_size, angles=angles)
            for angles in self.mh_generate_array(c, cfg, lattice_size)
        ]

    def imh_chain(
        self,
        proposals: np.ndarray,
        log_q: np.ndarray,
        log_p: np.ndarray,
        rng: np.random.Generator,
    ) -> IMHResult:
        """Run independent Metropolis-Hastings over pre-drawn independent proposals.

        Rejections repeat the current state. Proposals with non-finite log q or
        log p are rejected and counted in ``invalid_count``. Those arriving
        before the first valid proposal leave no chain entry but still count
        as rejected proposals in ``total_count``.
        """
        proposals = np.asarray(proposals)
        log_q = np.asarray(log_q, dtype=np.float64)
        log_p = np.asarray(log_p, dtype=np.float64)
        if len(proposals) < 1:
            raise ContractError("IMH needs at least one proposal")
        if not (len(proposals) == len(log_q) == len(log_p)):
            raise ContractError("proposals, log q and log p must have equal length")

        uniforms = rng.random(len(proposals))
        valid = np.isfinite(log_q) & np.isfinite(log_p)
        chain_index: list[int] = []
        accepted = 0
        invalid = 0
        current = -1
        for i in range(len(proposals)):
            if not valid[i]:
                invalid += 1
                if current >= 0:
                    chain_index.append(current)
                continue
            if current < 0:
                current = i
                accepted += 1
                chain_index.append(current)
                continue
            log_ratio = (log_p[i] - log_p[current]) + (log_q[current] - log_q[i])
            if log_ratio >= 0.0 or uniforms[i] < math.exp(log_ratio):
                current = i
                accepted += 1
            chain_index.append(current)

        if current < 0:
            raise NumericError("every IMH proposal had a non-finite log density")
        if invalid:
            logger.warning("IMH rejected %d proposals with non-finite log densities", invalid)
        return IMHResult(
            chain=proposals[np.asarray(chain_index)],
            accepted_count=accepted,
            total_count=len(proposals),
            invalid_count=invalid,
        )

    def imh_resample(
        self,
        proposal_sampler: ProposalSampler,
        target_log_p: TargetLogDensity,
        n: int,
        rng: np.random.Generator,
    ) -> IMHResult:
        """De-bias ``n`` independent proposals against an unnormalized target.

        ``proposal_sampler(k)`` returns k proposals with their log q; proposals
        are independent of the chain state, so drawing them as one batch
        leaves the algorithm unchanged.
        """
        if n < 1:
            raise ContractError("IMH needs n >= 1")
        samples, log_q = proposal_sampler(n)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            log_p = np.asarray(target_log_p(samples), dtype=np.float64)
        return self.imh_chain(samples, log_q, log_p, rng)


mcmc_service = MCMCService()

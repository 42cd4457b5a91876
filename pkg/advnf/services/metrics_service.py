import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

from advnf.core.errors import ContractError
from advnf.models.experiment import EvaluationSpec
from advnf.models.lattice import LatticeCondition, SpinConfig
from advnf.models.metrics import SUMMARY_FIELDS, ConditionMetrics, Histogram, MetricsReport
from advnf.networks.flow import FlowModel
from advnf.services.flow_service import flow_service
from advnf.services.lattice_service import lattice_service
from advnf.services.mcmc_service import ProposalSampler, mcmc_service
from advnf.services.synthetic_service import SyntheticParams, synthetic_service
from advnf.services.targets import TargetDensity

logger = logging.getLogger(__name__)

ProposalFactory = Callable[[object, np.random.Generator], ProposalSampler]


def _same_edges(p: Histogram, q: Histogram) -> None:
    if p.edges != q.edges:
        raise ContractError("histograms must share identical bin edges")


def _spin_batch(configs) -> np.ndarray:
    if isinstance(configs, np.ndarray):
        batch = np.asarray(configs, dtype=np.float64)
    else:
        batch = np.stack([c.angles if isinstance(c, SpinConfig) else np.asarray(c) for c in configs])
    if batch.ndim == 2:
        n = math.isqrt(batch.shape[1])
        if n * n != batch.shape[1]:
            raise ContractError(f"flat configurations of width {batch.shape[1]} are not square lattices")
        batch = batch.reshape(len(batch), n, n)
    if batch.ndim != 3 or len(batch) == 0:
        raise ContractError("observable histograms need a nonempty (B, n, n) batch of configurations")
    return batch


def _population_std(values: list[float]) -> float:
    return float(np.std(values)) if values else 0.0


class MetricsService:
    # -- histogram comparisons ------------------------------------------

    def histogram(self, values, bins: int, value_range: tuple[float, float]) -> Histogram:
        """Counts over ``bins`` equal bins; values outside the range land in the edge bins."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        low, high = value_range
        outside = int(np.sum((values < low) | (values > high)))
        counts, edges = np.histogram(np.clip(values, low, high), bins=bins, range=(low, high))
        return Histogram(
            edges=tuple(float(e) for e in edges),
            masses=tuple(float(m) for m in counts),
            clamped=outside,
        )

    def percent_overlap(self, p: Histogram, q: Histogram) -> float:
        _same_edges(p, q)
        p_hat = p.normalized().mass_array()
        q_hat = q.normalized().mass_array()
        return float(100.0 * np.sum(np.minimum(p_hat, q_hat)))

    def emd_1d_bins(self, p: Histogram, q: Histogram) -> float:
        """Sum of absolute cumulative differences, in units of bins."""
        _same_edges(p, q)
        cumulative = np.cumsum(p.normalized().mass_array() - q.normalized().mass_array())
        return float(np.sum(np.abs(cumulative)))

    def emd_1d(self, p: Histogram, q: Histogram) -> float:
        """Earth mover's distance in units of the observable axis.

        Mass sits at bin centers, so the cumulative difference after bin j
        is carried across the gap to center j+1.
        """
        _same_edges(p, q)
        cumulative = np.cumsum(p.normalized().mass_array() - q.normalized().mass_array())
        gaps = np.diff(p.centers())
        return float(np.sum(np.abs(cumulative[:-1]) * gaps))

    # -- observables -----------------------------------------------------

    def observable_values(self, configs, J: float, K: float) -> tuple[np.ndarray, np.ndarray]:
        batch = _spin_batch(configs)
        energy = np.atleast_1d(lattice_service.energy_per_site(batch, J, K))
        magnetization = np.atleast_1d(lattice_service.magnetization(batch))
        return energy, magnetization

    def observable_histograms(
        self, configs, J: float, K: float, evaluation: Optional[EvaluationSpec] = None
    ) -> tuple[Histogram, Histogram]:
        evaluation = evaluation or EvaluationSpec()
        energy, magnetization = self.observable_values(configs, J, K)
        energy_hist = self.histogram(energy, evaluation.energy_bins, evaluation.energy_range)
        mag_hist = self.histogram(magnetization, evaluation.mag_bins, evaluation.mag_range)
        if energy_hist.clamped or mag_hist.clamped:
            logger.warning(
                "Clamped %d energy and %d magnetization values into the edge bins",
                energy_hist.clamped,
                mag_hist.clamped,
            )
        return energy_hist, mag_hist

    def observable_summary(self, configs, J: float, K: float) -> dict[str, float]:
        """Mean and population std of energy per site and magnetization."""
        energy, magnetization = self.observable_values(configs, J, K)
        return {
            "energy_mean": float(np.mean(energy)),
            "energy_std": float(np.std(energy)),
            "mag_mean": float(np.mean(magnetization)),
            "mag_std": float(np.std(magnetization)),
        }

    def compare_ensembles(
        self, samples, reference, J: float, K: float, evaluation: Optional[EvaluationSpec] = None
    ) -> dict[str, float]:
        evaluation = evaluation or EvaluationSpec()
        energy_p, mag_p = self.observable_histograms(samples, J, K, evaluation)
        energy_q, mag_q = self.observable_histograms(reference, J, K, evaluation)
        scale = evaluation.emd_report_scale
        return {
            "ol_energy": self.percent_overlap(energy_p, energy_q),
            "emd_energy": scale * self.emd_1d(energy_p, energy_q),
            "ol_mag": self.percent_overlap(mag_p, mag_q),
            "emd_mag": scale * self.emd_1d(mag_p, mag_q),
            "emd_energy_bins": self.emd_1d_bins(energy_p, energy_q),
            "emd_mag_bins": self.emd_1d_bins(mag_p, mag_q),
        }

    # -- model-level metrics ---------------------------------------------

    def nll(self, model: FlowModel, test_set, c) -> float:
        """Negative mean log q over a held-out set."""
        test_set = np.asarray(test_set, dtype=np.float64)
        if test_set.size == 0:
            raise ContractError("NLL needs a nonempty test set")
        return float(-np.mean(flow_service.flow_log_prob_array(model, test_set, c)))

    def summarize(self, variant: str, rows: list[ConditionMetrics]) -> MetricsReport:
        """Unweighted mean and population std over conditions of every reported field."""
        mean: dict[str, Optional[float]] = {}
        std: dict[str, Optional[float]] = {}
        for name in SUMMARY_FIELDS:
            values = [getattr(row, name) for row in rows if getattr(row, name) is not None]
            mean[name] = float(np.mean(values)) if values else None
            std[name] = _population_std(values) if values else None
        return MetricsReport(variant=variant, rows=rows, mean=mean, std=std)

    def _flow_proposals(self, model: FlowModel, c, rng: np.random.Generator) -> ProposalSampler:
        return lambda k: flow_service.flow_sample(model, k, c, rng)

    def _evaluate_condition(
        self,
        model: Optional[FlowModel],
        c,
        target: TargetDensity,
        rng: np.random.Generator,
        n: int,
        variant: str,
        test_set: Optional[np.ndarray],
        reference: Optional[np.ndarray],
        evaluation: EvaluationSpec,
        synthetic_params: Optional[SyntheticParams],
        proposal_factory: Optional[ProposalFactory],
    ) -> ConditionMetrics:
        proposal_rng, chain_rng = rng.spawn(2)
        if proposal_factory is not None:
            sampler = proposal_factory(c, proposal_rng)
        else:
            sampler = self._flow_proposals(model, c, proposal_rng)

        drawn: dict[str, np.ndarray] = {}

        def recording_sampler(k: int):
            samples, log_q = sampler(k)
            drawn["samples"] = samples
            return samples, log_q

        result = mcmc_service.imh_resample(recording_sampler, lambda x: target.log_prob(x, c), n, chain_rng)
        row = ConditionMetrics(variant=variant, condition=c.label(), ar=result.acceptance_rate)
        if model is not None and test_set is not None and len(test_set):
            row.nll = self.nll(model, test_set, c)
        if reference is not None and isinstance(c, LatticeCondition):
            row = row.model_copy(update=self.compare_ensembles(result.chain, reference, c.J, c.K, evaluation))
        if synthetic_params is not None:
            row.mode_occupancy = synthetic_service.mode_occupancy(drawn["samples"], synthetic_params)
        return row

    def evaluate_model(
        self,
        model: Optional[FlowModel],
        conditions: Sequence,
        target: TargetDensity,
        n_per_condition: int,
        references: Optional[Sequence[np.ndarray]] = None,
        test_sets: Optional[Sequence[np.ndarray]] = None,
        evaluation: Optional[EvaluationSpec] = None,
        variant: str = "model",
        seed: int = 0,
        jobs: int = 1,
        synthetic_params: Optional[SyntheticParams] = None,
        proposal_factory: Optional[ProposalFactory] = None,
    ) -> MetricsReport:
        """Per-condition NLL, IMH acceptance rate and observable agreement.

        Each condition draws ``n_per_condition`` flow samples, de-biases them
        with independent Metropolis-Hastings against ``target`` and compares
        the chain's observable histograms with ``references``. Conditions run
        on up to ``jobs`` threads with independent, seed-derived streams.
        """
        if not conditions:
            raise ContractError("evaluation needs at least one condition")
        if model is None and proposal_factory is None:
            raise ContractError("evaluation needs a model or a proposal factory")
        if references is not None and len(references) != len(conditions):
            raise ContractError("missing reference ensemble for some conditions")
        if test_sets is not None and len(test_sets) != len(conditions):
            raise ContractError("missing test set for some conditions")
        evaluation = evaluation or EvaluationSpec()
        streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(conditions))]

        def run(i: int) -> ConditionMetrics:
            return self._evaluate_condition(
                model,
                conditions[i],
                target,
                streams[i],
                n_per_condition,
                variant,
                test_sets[i] if test_sets is not None else None,
                references[i] if references is not None else None,
                evaluation,
                synthetic_params,
                proposal_factory,
            )

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            rows = list(pool.map(run, range(len(conditions))))
        report = self.summarize(variant, rows)
        logger.info(
            "Evaluated %s over %d conditions: NLL %s, AR %s",
            variant,
            len(rows),
            report.mean.get("nll"),
            report.mean.get("ar"),
        )
        return report


metrics_service = MetricsService()

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.core.errors import ContractError, TrainingError
from advnf.models.training import LossWeights
from advnf.networks.discriminator import Discriminator
from advnf.networks.flow import FlowModel
from advnf.services.flow_service import flow_service
from advnf.services.targets import TargetDensity

logger = logging.getLogger(__name__)

# reverse-KL batches with more than this share of non-finite target values abort training
MAX_EXCLUDED_FRACTION = 0.10


@dataclass
class LossTerms:
    total: Node
    fkl: Optional[float] = None
    rkl: Optional[float] = None
    adv: Optional[float] = None
    excluded_draws: int = 0


@dataclass
class _FakeBatch:
    samples: Node
    log_q: Node
    log_p: Optional[Node] = None
    excluded: int = 0


def _condition_node(c, batch: int) -> Node:
    embedding = np.asarray(c.embedding(), dtype=np.float64).reshape(-1)
    return graph.constant(np.tile(embedding, (batch, 1)))


class LossService:
    def fkl_loss(self, model: FlowModel, batch, c) -> Node:
        """Negative mean flow log-density of target samples."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.size == 0:
            raise ContractError("forward-KL loss needs a nonempty batch")
        return graph.neg(graph.reduce_mean(flow_service.flow_log_prob(model, batch, c)))

    def _fake_batch(
        self,
        model: FlowModel,
        c,
        m: int,
        rng: np.random.Generator,
        target: Optional[TargetDensity] = None,
    ) -> _FakeBatch:
        z = flow_service.draw_base(model, m, c, rng)
        samples, log_q = flow_service.push_forward(model, z, c)
        if target is None:
            return _FakeBatch(samples=samples, log_q=log_q)

        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            values = np.asarray(target.log_prob(samples.value, c), dtype=np.float64)
        keep = np.isfinite(values)
        excluded = int((~keep).sum())
        if excluded:
            if excluded > MAX_EXCLUDED_FRACTION * m:
                raise TrainingError(
                    f"{excluded} of {m} reverse-KL draws have a non-finite target density"
                )
            logger.warning("Excluded %d of %d reverse-KL draws with non-finite target density", excluded, m)
            samples, log_q = flow_service.push_forward(model, z[keep], c)
        return _FakeBatch(
            samples=samples, log_q=log_q, log_p=target.log_prob_graph(samples, c), excluded=excluded
        )

    def rkl_loss(
        self,
        model: FlowModel,
        target: TargetDensity,
        c,
        m: int,
        rng: np.random.Generator,
    ) -> Node:
        """Mean of log q(x) - log p(x) over ``m`` reparameterized flow draws."""
        if m < 1:
            raise ContractError("reverse-KL loss needs m >= 1")
        fake = self._fake_batch(model, c, m, rng, target)
        return graph.reduce_mean(graph.sub(fake.log_q, fake.log_p))

    def adv_loss(self, disc: Discriminator, real_batch, fake_batch, c) -> Node:
        """Binary cross-entropy of ``disc`` labelling real as 1 and fake as 0.

        ``fake_batch`` may be a graph node so that generator gradients flow
        through the discriminator.
        """
        real = graph.as_node(np.asarray(real_batch, dtype=np.float64))
        fake = graph.as_node(fake_batch)
        if real.value.size == 0 or fake.value.size == 0:
            raise ContractError("adversarial loss needs nonempty real and fake batches")
        real_logit = disc.logit(real, _condition_node(c, real.shape[0]))
        fake_logit = disc.logit(fake, _condition_node(c, fake.shape[0]))
        # -log D = softplus(-logit), -log(1 - D) = softplus(logit)
        return graph.add(
            graph.reduce_mean(graph.softplus(graph.neg(real_logit))),
            graph.reduce_mean(graph.softplus(fake_logit)),
        )

    def objective_terms(
        self,
        weights: LossWeights,
        model: FlowModel,
        disc: Optional[Discriminator],
        real_batch,
        target: Optional[TargetDensity],
        c,
        m: int,
        rng: np.random.Generator,
    ) -> LossTerms:
        """O = -lambda_adv * L_adv + lambda_rkl * L_rkl + lambda_fkl * L_fkl.

        Terms with zero weight are never evaluated.
        """
        if weights.is_zero():
            raise ContractError("at least one loss weight must be positive")
        use_adv = weights.lambda_adv > 0.0
        use_rkl = weights.lambda_rkl > 0.0
        use_fkl = weights.lambda_fkl > 0.0
        if (use_adv or use_fkl) and (real_batch is None or np.asarray(real_batch).size == 0):
            raise ContractError("forward-KL and adversarial terms need a data batch")
        if use_adv and disc is None:
            raise ContractError("adversarial term needs a discriminator")
        if use_rkl and target is None:
            raise ContractError("reverse-KL term needs a target density")

        parts: list[Node] = []
        terms = LossTerms(total=graph.constant(0.0))
        fake = None
        if use_rkl or use_adv:
            if m < 1:
                raise ContractError("generated batch size m must be >= 1")
            fake = self._fake_batch(model, c, m, rng, target if use_rkl else None)
            terms.excluded_draws = fake.excluded
        if use_rkl:
            rkl = graph.reduce_mean(graph.sub(fake.log_q, fake.log_p))
            terms.rkl = rkl.item()
            parts.append(graph.mul(rkl, weights.lambda_rkl))
        if use_fkl:
            fkl = self.fkl_loss(model, real_batch, c)
            terms.fkl = fkl.item()
            parts.append(graph.mul(fkl, weights.lambda_fkl))
        if use_adv:
            adv = self.adv_loss(disc, real_batch, fake.samples, c)
            terms.adv = adv.item()
            parts.append(graph.mul(adv, -weights.lambda_adv))

        total = parts[0]
        for part in parts[1:]:
            total = graph.add(total, part)
        terms.total = total
        return terms

    def objective(
        self,
        weights: LossWeights,
        model: FlowModel,
        disc: Optional[Discriminator],
        real_batch,
        target: Optional[TargetDensity],
        c,
        m: int,
        rng: np.random.Generator,
    ) -> Node:
        return self.objective_terms(weights, model, disc, real_batch, target, c, m, rng).total


loss_service = LossService()

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from advnf.autodiff import graph
from advnf.autodiff.nn import Module
from advnf.autodiff.optim import AdamState, adam_step, piecewise_constant_lr, scheduled_value
from advnf.core.config import settings
from advnf.core.errors import ContractError, NumericError, TrainingError
from advnf.experiments.presets import preset_weights
from advnf.models.training import LossWeights, TraceRow, TrainConfig
from advnf.networks.discriminator import Discriminator
from advnf.networks.flow import FlowModel
from advnf.services.loss_service import loss_service
from advnf.services.targets import TargetDensity

logger = logging.getLogger(__name__)

# epoch length, in rounds over the conditions, when there is no data to define one
_DATALESS_ROUNDS = 8

CheckpointHook = Callable[[int, int, FlowModel, Optional[Discriminator]], None]
SnapshotHook = Callable[[int, FlowModel], None]


@dataclass
class TrainingSet:
    """Per-condition sample arrays; ``train[i]`` and ``val[i]`` belong to ``conditions[i]``."""

    conditions: list
    train: list[np.ndarray] = field(default_factory=list)
    val: list[np.ndarray] = field(default_factory=list)

    def has_train(self) -> bool:
        return len(self.train) == len(self.conditions) and all(len(x) > 0 for x in self.train)

    def has_val(self) -> bool:
        return len(self.val) == len(self.conditions) and all(len(x) > 0 for x in self.val)


@dataclass
class PhaseResult:
    trace: list[TraceRow] = field(default_factory=list)
    iterations: int = 0
    epochs: int = 0
    best_validation: Optional[float] = None
    stopped_early: bool = False


def _phase_rng(seed: int, phase: int) -> np.random.Generator:
    return np.random.default_rng([seed, phase])


def _gradients(module: Module, sign: float = 1.0) -> dict:
    return {name: sign * node.grad for name, node in module.named_parameters().items()}


class TrainingService:
    def preset_weights(self, variant: str, dataset: str, adversarial: bool = True) -> tuple[LossWeights, LossWeights]:
        """(phase-1, phase-2) weights for a variant on a dataset family."""
        return preset_weights(variant, dataset, adversarial)

    # -- shared step -----------------------------------------------------

    def _check_weights(self, weights: LossWeights, data: TrainingSet, target: Optional[TargetDensity]) -> None:
        if not data.conditions:
            raise ContractError("training needs at least one condition")
        if (weights.lambda_fkl > 0.0 or weights.lambda_adv > 0.0) and not data.has_train():
            raise ContractError("forward-KL and adversarial training need samples for every condition")
        if weights.lambda_rkl > 0.0 and target is None:
            raise ContractError("reverse-KL training needs a target density")

    def _generator_step(
        self,
        model: FlowModel,
        state: AdamState,
        weights: LossWeights,
        batch: Optional[np.ndarray],
        target: Optional[TargetDensity],
        c,
        m: int,
        lr: float,
        rng: np.random.Generator,
    ):
        terms = loss_service.objective_terms(weights, model, None, batch, target, c, m, rng)
        model.zero_grad()
        graph.backward(terms.total)
        adam_step(state, model.named_parameters(), _gradients(model), lr)
        return terms

    def _validation_objective(
        self,
        model: FlowModel,
        weights: LossWeights,
        data: TrainingSet,
        target: Optional[TargetDensity],
        draws: int,
        seed: int,
    ) -> float:
        """Weighted phase-1 objective averaged over conditions with fixed validation draws."""
        values = []
        rng = np.random.default_rng([seed, 99])
        for i, c in enumerate(data.conditions):
            value = 0.0
            if weights.lambda_fkl > 0.0:
                batch = data.val[i] if data.has_val() else data.train[i]
                value += weights.lambda_fkl * loss_service.fkl_loss(model, batch, c).item()
            if weights.lambda_rkl > 0.0:
                value += weights.lambda_rkl * loss_service.rkl_loss(model, target, c, draws, rng).item()
            values.append(value)
        return float(np.mean(values))

    def _epoch_batches(self, data: TrainingSet, batch_size: int, steps: Optional[int], rng) -> list[tuple[int, Optional[np.ndarray]]]:
        """Round-robin over conditions; each entry is (condition index, batch or None)."""
        n_conditions = len(data.conditions)
        if data.has_train() and steps is None:
            per_condition = []
            for samples in data.train:
                order = rng.permutation(len(samples))
                per_condition.append(
                    [samples[order[k:k + batch_size]] for k in range(0, len(samples), batch_size)]
                )
            rounds = max(len(batches) for batches in per_condition)
            return [
                (i, per_condition[i][r])
                for r in range(rounds)
                for i in range(n_conditions)
                if r < len(per_condition[i])
            ]
        steps = steps or _DATALESS_ROUNDS * n_conditions
        plan = []
        for k in range(steps):
            i = k % n_conditions
            batch = None
            if data.has_train():
                samples = data.train[i]
                batch = samples[rng.choice(len(samples), size=min(batch_size, len(samples)), replace=False)]
            plan.append((i, batch))
        return plan

    # -- phase 1 ---------------------------------------------------------

    def train_phase1(
        self,
        model: FlowModel,
        data: TrainingSet,
        target: Optional[TargetDensity],
        cfg: TrainConfig,
        weights: Optional[LossWeights] = None,
    ) -> PhaseResult:
        """Non-adversarial training with early stopping on the validation objective.

        The best-validation parameters are restored before returning.
        """
        weights = weights or cfg.phase1.weights
        if weights is None:
            raise ContractError("phase 1 needs loss weights")
        if weights.lambda_adv != 0.0:
            raise ContractError("phase 1 runs with lambda_adv = 0")
        self._check_weights(weights, data, target)

        p1 = cfg.phase1
        rng = _phase_rng(cfg.seed, 1)
        state = AdamState()
        result = PhaseResult()
        best_state = model.state_dict()
        best_value = math.inf
        waited = 0
        iteration = 0

        for epoch in tqdm(range(p1.max_epochs), desc="phase 1", disable=not settings.SHOW_PROGRESS):
            lr = piecewise_constant_lr(
                cfg.gen_lr, epoch, p1.max_epochs, cfg.lr_decay_boundaries, cfg.lr_decay_factor
            )
            for i, batch in self._epoch_batches(data, cfg.batch_size, p1.steps_per_epoch, rng):
                c = data.conditions[i]
                try:
                    terms = self._generator_step(model, state, weights, batch, target, c, cfg.batch_size, lr, rng)
                except NumericError as exc:
                    raise self._diverged(1, iteration, exc, model) from exc
                result.trace.append(
                    TraceRow(
                        phase=1, iteration=iteration, lambda1=0.0,
                        lambda2=weights.lambda_rkl, lambda3=weights.lambda_fkl,
                        loss_total=terms.total.item(), loss_fkl=terms.fkl, loss_rkl=terms.rkl,
                        loss_adv=None, lr_gen=lr, lr_disc=None,
                    )
                )
                iteration += 1

            try:
                value = self._validation_objective(model, weights, data, target, p1.validation_draws, cfg.seed)
            except NumericError as exc:
                raise self._diverged(1, iteration, exc, model) from exc
            result.epochs = epoch + 1
            logger.info("Phase 1 epoch %d: validation objective %.6f", epoch + 1, value)
            if value < best_value - p1.tolerance:
                best_value = value
                best_state = model.state_dict()
                waited = 0
            else:
                waited += 1
                if p1.patience > 0 and waited >= p1.patience:
                    result.stopped_early = True
                    logger.info("Phase 1 converged after %d epochs", epoch + 1)
                    break

        if result.epochs:
            model.load_state_dict(best_state)
            result.best_validation = best_value
        result.iterations = iteration
        return result

    # -- phase 2 ---------------------------------------------------------

    def train_phase2(
        self,
        model: FlowModel,
        disc: Optional[Discriminator],
        data: TrainingSet,
        target: Optional[TargetDensity],
        cfg: TrainConfig,
        weights: Optional[LossWeights] = None,
        on_checkpoint: Optional[CheckpointHook] = None,
        on_snapshot: Optional[SnapshotHook] = None,
    ) -> PhaseResult:
        """K iterations of one generator descent step then one discriminator ascent step.

        Both steps use the gradients of a single evaluation of the objective.
        With lambda_adv = 0 throughout, the discriminator is never touched
        and the run continues plain conditional-flow training.
        """
        weights = weights or cfg.phase2.weights
        if weights is None:
            raise ContractError("phase 2 needs loss weights")
        p2 = cfg.phase2
        schedule = p2.lambda1_schedule or [(0, weights.lambda_adv)]
        adversarial = any(value > 0.0 for _, value in schedule)
        if adversarial and disc is None:
            raise ContractError("adversarial phase 2 needs a discriminator")
        self._check_weights(weights.with_adv(max(value for _, value in schedule)), data, target)

        rng = _phase_rng(cfg.seed, 2)
        gen_state = AdamState()
        disc_state = AdamState()
        result = PhaseResult()
        snapshots = set(p2.snapshot_iterations)
        checkpoint_every = cfg.checkpoint_every
        total = p2.iterations
        base_gen_lr = cfg.phase2_gen_lr()

        if on_snapshot is not None and 0 in snapshots:
            on_snapshot(0, model)
        for k in tqdm(range(total), desc="phase 2", disable=not settings.SHOW_PROGRESS):
            i = k % len(data.conditions)
            c = data.conditions[i]
            lambda1 = scheduled_value(schedule, k)
            step_weights = weights.with_adv(lambda1)
            batch = None
            if data.has_train():
                samples = data.train[i]
                batch = samples[rng.choice(len(samples), size=min(cfg.batch_size, len(samples)), replace=False)]
            lr_gen = piecewise_constant_lr(base_gen_lr, k, total, cfg.lr_decay_boundaries, cfg.lr_decay_factor)
            lr_disc = piecewise_constant_lr(cfg.disc_lr, k, total, cfg.lr_decay_boundaries, cfg.lr_decay_factor)

            try:
                terms = loss_service.objective_terms(
                    step_weights, model, disc if lambda1 > 0.0 else None, batch, target, c, cfg.batch_size, rng
                )
                model.zero_grad()
                if disc is not None:
                    disc.zero_grad()
                graph.backward(terms.total)
                adam_step(gen_state, model.named_parameters(), _gradients(model), lr_gen)
                if lambda1 > 0.0:
                    # ascent on the objective
                    adam_step(disc_state, disc.named_parameters(), _gradients(disc, -1.0), lr_disc)
            except NumericError as exc:
                raise self._diverged(2, k, exc, model) from exc

            result.trace.append(
                TraceRow(
                    phase=2, iteration=k, lambda1=lambda1,
                    lambda2=weights.lambda_rkl, lambda3=weights.lambda_fkl,
                    loss_total=terms.total.item(), loss_fkl=terms.fkl, loss_rkl=terms.rkl,
                    loss_adv=terms.adv, lr_gen=lr_gen, lr_disc=lr_disc if lambda1 > 0.0 else None,
                )
            )
            done = k + 1
            if on_snapshot is not None and done in snapshots:
                on_snapshot(done, model)
            if on_checkpoint is not None and checkpoint_every and done % checkpoint_every == 0:
                on_checkpoint(2, done, model, disc)

        result.iterations = total
        logger.info("Phase 2 finished %d iterations", total)
        return result

    def _diverged(self, phase: int, iteration: int, exc: Exception, model: FlowModel) -> TrainingError:
        # the failed step never reached the optimizer, so current parameters are the last good ones
        logger.error("Phase %d diverged at iteration %d: %s", phase, iteration, exc)
        if isinstance(exc, TrainingError) and exc.last_good_state is not None:
            return exc
        return TrainingError(
            f"phase {phase} diverged at iteration {iteration}: {exc}",
            last_good_state=model.state_dict(),
        )


training_service = TrainingService()

import math

import numpy as np
import pytest

from advnf.autodiff import graph
from advnf.core.errors import ContractError
from advnf.models.flow import DiscriminatorSpec, FlowSpec
from advnf.models.synthetic import SyntheticCondition
from advnf.models.training import LossWeights, Phase1Config, Phase2Config, TrainConfig
from advnf.networks.discriminator import Discriminator
from advnf.networks.flow import FlowModel
from advnf.services.flow_service import flow_service
from advnf.services.loss_service import loss_service
from advnf.services.synthetic_service import default_mog4, synthetic_service
from advnf.services.training_service import TrainingSet, _phase_rng, training_service


def _data(n_train: int = 64, n_val: int = 32) -> TrainingSet:
    params = default_mog4()
    conditions = synthetic_service.conditions(params)[:2]
    rng = np.random.default_rng(0)
    return TrainingSet(
        conditions=conditions,
        train=[synthetic_service.sample_component(params, c.component_index, n_train, rng) for c in conditions],
        val=[synthetic_service.sample_component(params, c.component_index, n_val, rng) for c in conditions],
    )


def _flow(seed: int = 0) -> FlowModel:
    return FlowModel(FlowSpec(dim=2, cond_dim=2, n_layers=2, hidden=(8,)), np.random.default_rng(seed))


def _disc() -> Discriminator:
    return Discriminator(DiscriminatorSpec(dim=2, cond_dim=2, hidden=(8,)), np.random.default_rng(1))


def _config(epochs: int = 2, iterations: int = 4, **phase2) -> TrainConfig:
    return TrainConfig(
        phase1=Phase1Config(weights=LossWeights(lambda_fkl=1.0), max_epochs=epochs, patience=0),
        phase2=Phase2Config(weights=LossWeights(lambda_adv=1.0, lambda_fkl=1.0), iterations=iterations, **phase2),
        batch_size=32,
        gen_lr=1e-3,
        disc_lr=1e-3,
        seed=5,
    )


def _same(a: dict, b: dict) -> bool:
    return set(a) == set(b) and all(np.array_equal(a[k], b[k]) for k in a)


def test_phase1_without_patience_runs_every_epoch():
    data = _data()
    model = _flow()
    result = training_service.train_phase1(model, data, None, _config(epochs=3))
    assert result.epochs == 3
    assert not result.stopped_early
    # 64 samples in batches of 32 for each of the two conditions
    assert result.iterations == 3 * 2 * 2
    assert len(result.trace) == result.iterations
    assert {row.phase for row in result.trace} == {1}
    assert all(row.loss_adv is None and row.loss_fkl is not None for row in result.trace)


def test_phase1_restores_the_best_validation_state():
    data = _data()
    model = _flow()
    cfg = _config(epochs=3)
    result = training_service.train_phase1(model, data, None, cfg)
    value = training_service._validation_objective(
        model, cfg.phase1.weights, data, None, cfg.phase1.validation_draws, cfg.seed
    )
    assert value == pytest.approx(result.best_validation)


def test_phase1_refuses_an_adversarial_weight():
    with pytest.raises(ContractError):
        training_service.train_phase1(
            _flow(), _data(), None, _config(), weights=LossWeights(lambda_adv=1.0, lambda_fkl=1.0)
        )


def test_phase1_is_deterministic_for_a_seed():
    first, second = _flow(), _flow()
    training_service.train_phase1(first, _data(), None, _config(epochs=1))
    training_service.train_phase1(second, _data(), None, _config(epochs=1))
    assert _same(first.state_dict(), second.state_dict())


def test_zero_phase2_iterations_change_nothing():
    model, disc = _flow(), _disc()
    before, disc_before = model.state_dict(), disc.state_dict()
    result = training_service.train_phase2(model, disc, _data(), None, _config(iterations=0))
    assert result.iterations == 0 and result.trace == []
    assert _same(model.state_dict(), before)
    assert _same(disc.state_dict(), disc_before)


def test_baseline_phase2_never_touches_the_discriminator():
    model, disc = _flow(), _disc()
    before, disc_before = model.state_dict(), disc.state_dict()
    cfg = _config(iterations=3)
    result = training_service.train_phase2(model, disc, _data(), None, cfg, weights=LossWeights(lambda_fkl=1.0))
    assert not _same(model.state_dict(), before)
    assert _same(disc.state_dict(), disc_before)
    assert all(row.loss_adv is None and row.lr_disc is None for row in result.trace)


def test_adversarial_phase2_follows_the_lambda_schedule():
    model, disc = _flow(), _disc()
    disc_before = disc.state_dict()
    checkpoints = []
    snapshots = []
    cfg = _config(iterations=4, lambda1_schedule=[(0, 10.0), (2, 1.0)], snapshot_iterations=[0, 4])
    cfg = cfg.model_copy(update={"checkpoint_every": 2})
    result = training_service.train_phase2(
        model, disc, _data(), None, cfg,
        on_checkpoint=lambda phase, it, m, d: checkpoints.append((phase, it)),
        on_snapshot=lambda it, m: snapshots.append(it),
    )
    assert [row.lambda1 for row in result.trace] == [10.0, 10.0, 1.0, 1.0]
    assert all(row.loss_adv is not None for row in result.trace)
    assert not _same(disc.state_dict(), disc_before)
    assert checkpoints == [(2, 2), (2, 4)]
    assert snapshots == [0, 4]


def test_adversarial_phase2_needs_a_discriminator():
    with pytest.raises(ContractError):
        training_service.train_phase2(_flow(), None, _data(), None, _config())


def _point_mass_data() -> TrainingSet:
    c = synthetic_service.conditions(default_mog4())[0]
    return TrainingSet(conditions=[c], train=[np.tile(c.embedding(), (8, 1))])


def _adversarial_step(gen_lr: float, disc_lr: float) -> tuple[float, float]:
    """Adversarial loss on the step's own draws before and after one phase-2 iteration."""
    data = _point_mass_data()
    c = data.conditions[0]
    model, disc = _flow(), _disc()
    rng = np.random.default_rng(4)
    disc.load_state_dict({k: v + 0.5 * rng.standard_normal(v.shape) for k, v in disc.state_dict().items()})
    cfg = TrainConfig(
        phase2=Phase2Config(weights=LossWeights(lambda_adv=1.0), iterations=1),
        batch_size=64, gen_lr=gen_lr, disc_lr=disc_lr, seed=3,
    )
    # replay the step's random stream: batch order, then the generated draws
    replay = _phase_rng(cfg.seed, 2)
    replay.choice(8, size=8, replace=False)
    z = replay.standard_normal((64, 2))

    def adv() -> float:
        fake, _ = flow_service.push_forward(model, z, c)
        return loss_service.adv_loss(disc, data.train[0], fake, c).item()

    before = adv()
    training_service.train_phase2(model, disc, data, None, cfg)
    return before, adv()


def test_generator_descends_and_discriminator_ascends_the_objective():
    before, after = _adversarial_step(gen_lr=1e-4, disc_lr=1e-12)
    assert after > before

    before, after = _adversarial_step(gen_lr=1e-12, disc_lr=1e-4)
    assert after < before


class _GaussianTarget:
    """N((1, 1), 0.1 I), ignoring the condition."""

    mean = np.array([1.0, 1.0])
    var = 0.1

    def log_prob(self, x, c):
        d = np.atleast_2d(x) - self.mean
        return -0.5 * np.sum(d * d, axis=1) / self.var - math.log(2 * math.pi * self.var)

    def log_prob_graph(self, x, c):
        quad = graph.reduce_sum(graph.square(graph.sub(x, self.mean)), axis=1)
        return graph.sub(graph.mul(quad, -0.5 / self.var), math.log(2 * math.pi * self.var))


def _gaussian_condition() -> SyntheticCondition:
    return SyntheticCondition(kind="mog-mean", value=(1.0, 1.0), component_index=0)


def _convergence_config(weights: LossWeights, **phase1) -> TrainConfig:
    return TrainConfig(
        phase1=Phase1Config(weights=weights, max_epochs=200, patience=20, **phase1),
        batch_size=256, gen_lr=3e-3, seed=1,
    )


@pytest.mark.slow
def test_forward_kl_converges_to_the_target_entropy():
    target = _GaussianTarget()
    rng = np.random.default_rng(0)
    scale = math.sqrt(target.var)
    train = rng.normal(target.mean, scale, size=(4000, 2))
    val = rng.normal(target.mean, scale, size=(2000, 2))
    data = TrainingSet(conditions=[_gaussian_condition()], train=[train], val=[val])
    model = FlowModel(FlowSpec(dim=2, cond_dim=2, n_layers=10, hidden=(16,)), np.random.default_rng(1))

    result = training_service.train_phase1(model, data, None, _convergence_config(LossWeights(lambda_fkl=1.0)))
    # ln(2 pi e 0.1), estimated on the same validation draws
    entropy = -float(np.mean(target.log_prob(data.val[0], None)))
    assert entropy == pytest.approx(math.log(2 * math.pi * math.e * target.var), abs=0.1)
    assert result.best_validation == pytest.approx(entropy, abs=0.05)


@pytest.mark.slow
def test_reverse_kl_converges_to_zero():
    data = TrainingSet(conditions=[_gaussian_condition()])
    model = FlowModel(FlowSpec(dim=2, cond_dim=2, n_layers=10, hidden=(16,)), np.random.default_rng(1))
    cfg = _convergence_config(LossWeights(lambda_rkl=1.0), steps_per_epoch=20, validation_draws=2000)

    result = training_service.train_phase1(model, data, _GaussianTarget(), cfg)
    assert result.best_validation < 0.02

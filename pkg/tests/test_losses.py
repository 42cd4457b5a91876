import math

import numpy as np
import pytest

from advnf.autodiff import graph
from advnf.autodiff.gradcheck import numerical_gradient
from advnf.core.errors import ContractError, TrainingError
from advnf.models.flow import DiscriminatorSpec, FlowSpec
from advnf.models.training import LossWeights
from advnf.networks.discriminator import Discriminator
from advnf.networks.flow import FlowModel
from advnf.services.flow_service import flow_service
from advnf.services.loss_service import loss_service
from advnf.services.synthetic_service import default_mog4, synthetic_service

CONDITION = synthetic_service.conditions(default_mog4())[0]


class StandardNormalTarget:
    def __init__(self, shift: float = 0.0):
        self.shift = shift

    def log_prob(self, x, c):
        x = np.atleast_2d(x)
        return -0.5 * np.sum(x * x, axis=1) - math.log(2 * math.pi) + self.shift

    def log_prob_graph(self, x, c):
        quad = graph.mul(graph.reduce_sum(graph.square(x), axis=1), -0.5)
        return graph.add(quad, self.shift - math.log(2 * math.pi))


class RightHalfPlaneTarget(StandardNormalTarget):
    def log_prob(self, x, c):
        values = super().log_prob(x, c)
        return np.where(np.atleast_2d(x)[:, 0] > 0.0, values, -np.inf)


def _identity_flow() -> FlowModel:
    return FlowModel(FlowSpec(dim=2, cond_dim=2, n_layers=2, hidden=(8,)), np.random.default_rng(0))


def _silent_discriminator() -> Discriminator:
    disc = Discriminator(DiscriminatorSpec(dim=2, cond_dim=2, hidden=(8,)), np.random.default_rng(1))
    state = disc.state_dict()
    state["net.linear1.weight"] = np.zeros_like(state["net.linear1.weight"])
    state["net.linear1.bias"] = np.zeros_like(state["net.linear1.bias"])
    disc.load_state_dict(state)
    return disc


def test_forward_kl_at_origin_of_identity_flow():
    loss = loss_service.fkl_loss(_identity_flow(), np.zeros((1, 2)), CONDITION)
    assert loss.item() == pytest.approx(math.log(2 * math.pi))
    with pytest.raises(ContractError):
        loss_service.fkl_loss(_identity_flow(), np.zeros((0, 2)), CONDITION)


def test_adversarial_loss_of_an_uninformed_discriminator():
    rng = np.random.default_rng(2)
    loss = loss_service.adv_loss(_silent_discriminator(), rng.normal(size=(5, 2)), rng.normal(size=(7, 2)), CONDITION)
    assert loss.item() == pytest.approx(2 * math.log(2))


def test_reverse_kl_vanishes_when_flow_equals_target():
    model = _identity_flow()
    loss = loss_service.rkl_loss(model, StandardNormalTarget(), CONDITION, 64, np.random.default_rng(3))
    assert loss.item() == pytest.approx(0.0, abs=1e-12)

    shifted = loss_service.rkl_loss(model, StandardNormalTarget(shift=2.5), CONDITION, 64, np.random.default_rng(3))
    assert shifted.item() == pytest.approx(-2.5, abs=1e-12)


def test_reverse_kl_aborts_when_too_many_draws_are_invalid():
    with pytest.raises(TrainingError):
        loss_service.rkl_loss(_identity_flow(), RightHalfPlaneTarget(), CONDITION, 64, np.random.default_rng(4))


def test_objective_is_linear_in_the_weights():
    model = _identity_flow()
    disc = _silent_discriminator()
    real = np.random.default_rng(5).normal(size=(16, 2))
    fkl = loss_service.fkl_loss(model, real, CONDITION).item()

    def objective(weights):
        return loss_service.objective(
            weights, model, disc, real, StandardNormalTarget(), CONDITION, 8, np.random.default_rng(6)
        ).item()

    assert objective(LossWeights(lambda_fkl=2.0)) == pytest.approx(2.0 * fkl)
    assert objective(LossWeights(lambda_adv=1.0, lambda_fkl=1.0)) == pytest.approx(fkl - 2 * math.log(2))
    assert objective(LossWeights(lambda_rkl=3.0, lambda_fkl=1.0)) == pytest.approx(fkl, abs=1e-12)


def test_objective_reports_each_term():
    terms = loss_service.objective_terms(
        LossWeights(lambda_adv=0.5, lambda_fkl=1.0), _identity_flow(), _silent_discriminator(),
        np.zeros((4, 2)), None, CONDITION, 4, np.random.default_rng(7),
    )
    assert terms.fkl == pytest.approx(math.log(2 * math.pi))
    assert terms.adv == pytest.approx(2 * math.log(2))
    assert terms.rkl is None


def test_objective_preconditions():
    model = _identity_flow()
    rng = np.random.default_rng(8)
    with pytest.raises(ContractError):
        loss_service.objective(LossWeights(), model, None, np.zeros((2, 2)), None, CONDITION, 4, rng)
    with pytest.raises(ContractError):
        loss_service.objective(LossWeights(lambda_adv=1.0), model, None, np.zeros((2, 2)), None, CONDITION, 4, rng)
    with pytest.raises(ContractError):
        loss_service.objective(LossWeights(lambda_rkl=1.0), model, None, None, None, CONDITION, 4, rng)
    with pytest.raises(ContractError):
        loss_service.objective(LossWeights(lambda_fkl=1.0), model, None, None, None, CONDITION, 4, rng)


def _perturbed_flow() -> FlowModel:
    model = _identity_flow()
    rng = np.random.default_rng(9)
    model.load_state_dict({k: v + 0.3 * rng.standard_normal(v.shape) for k, v in model.state_dict().items()})
    return model


def _assert_parameter_gradients(model: FlowModel, loss) -> None:
    model.zero_grad()
    graph.backward(loss())
    analytic = {name: node.grad.copy() for name, node in model.named_parameters().items()}
    original = model.state_dict()

    for name, grad in analytic.items():
        def value(array, name=name):
            model.load_state_dict({**original, name: array})
            return loss().item()

        numeric = numerical_gradient(value, original[name])
        assert grad == pytest.approx(numeric, rel=1e-4, abs=1e-7), name
    model.load_state_dict(original)


def test_flow_log_prob_gradients_match_finite_differences():
    model = _perturbed_flow()
    x = np.random.default_rng(10).normal(size=(6, 2))
    _assert_parameter_gradients(
        model, lambda: graph.reduce_sum(flow_service.flow_log_prob(model, x, CONDITION))
    )


def test_reverse_kl_gradients_match_finite_differences():
    model = _perturbed_flow()
    target = StandardNormalTarget()
    # a fresh generator per evaluation keeps the base draws fixed
    _assert_parameter_gradients(
        model, lambda: loss_service.rkl_loss(model, target, CONDITION, 16, np.random.default_rng(11))
    )

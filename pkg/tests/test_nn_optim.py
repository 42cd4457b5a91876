import numpy as np
import pytest

from advnf.autodiff import graph
from advnf.autodiff.nn import MLP, Linear
from advnf.autodiff.optim import AdamState, adam_step, piecewise_constant_lr, scheduled_value
from advnf.core.errors import CheckpointError, ContractError, ShapeError, TrainingError


def test_first_adam_step_moves_by_lr_times_gradient_sign():
    param = graph.parameter([1.0, -2.0, 0.5])
    grad = np.array([0.3, -4.0, 1e-3])
    adam_step(AdamState(), {"w": param}, {"w": grad}, lr=0.01)
    expected = np.array([1.0, -2.0, 0.5]) - 0.01 * grad / (np.abs(grad) + 1e-8)
    assert param.value == pytest.approx(expected, abs=1e-12)


def test_zero_gradient_leaves_parameters_unchanged():
    param = graph.parameter([1.0, 2.0])
    adam_step(AdamState(), {"w": param}, {"w": np.zeros(2)}, lr=0.1)
    assert param.value.tolist() == [1.0, 2.0]


def test_adam_minimizes_a_scalar_quadratic():
    theta = graph.parameter(1.0)
    state = AdamState()
    for _ in range(200):
        theta.zero_grad()
        graph.backward(graph.square(theta))
        adam_step(state, {"theta": theta}, {"theta": theta.grad}, lr=0.1)
    assert abs(float(theta.value)) < 1e-2


def test_adam_rejects_bad_gradients_without_moving():
    param = graph.parameter([1.0, 2.0])
    state = AdamState()
    with pytest.raises(TrainingError):
        adam_step(state, {"w": param}, {"w": np.array([np.nan, 0.0])}, lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(state, {"w": param}, {"w": np.zeros(3)}, lr=0.1)
    assert param.value.tolist() == [1.0, 2.0]
    assert state.step == 0


def test_piecewise_constant_lr_halves_at_each_boundary():
    assert piecewise_constant_lr(1.0, 0, 100) == 1.0
    assert piecewise_constant_lr(1.0, 50, 100) == 0.5
    assert piecewise_constant_lr(1.0, 99, 100) == 0.25


def test_scheduled_value_is_piecewise_constant():
    schedule = [(0, 100.0), (500, 10.0)]
    assert scheduled_value(schedule, 0) == 100.0
    assert scheduled_value(schedule, 499) == 100.0
    assert scheduled_value(schedule, 500) == 10.0


def test_mlp_parameters_are_named_per_layer():
    net = MLP(3, [4, 5], 2, np.random.default_rng(0))
    names = sorted(net.named_parameters())
    assert names == [
        "linear0.bias", "linear0.weight",
        "linear1.bias", "linear1.weight",
        "linear2.bias", "linear2.weight",
    ]
    out = net(graph.constant(np.ones((7, 3))))
    assert out.shape == (7, 2)


def test_zero_initialized_output_layer_returns_zeros():
    net = MLP(2, [8], 3, np.random.default_rng(0), output_activation="tanh", zero_init_output=True)
    out = net(graph.constant(np.random.default_rng(1).normal(size=(4, 2))))
    assert np.all(out.value == 0.0)


def test_state_dict_round_trip_and_mismatch():
    source = MLP(2, [4], 1, np.random.default_rng(0))
    target = MLP(2, [4], 1, np.random.default_rng(1))
    target.load_state_dict(source.state_dict())
    for name, node in target.named_parameters().items():
        assert np.array_equal(node.value, source.named_parameters()[name].value)

    with pytest.raises(CheckpointError):
        MLP(2, [5], 1, np.random.default_rng(0)).load_state_dict(source.state_dict())


def test_invalid_layer_arguments():
    with pytest.raises(ContractError):
        Linear(0, 2, np.random.default_rng(0))
    with pytest.raises(ContractError):
        MLP(2, [2], 1, np.random.default_rng(0), activation="gelu")

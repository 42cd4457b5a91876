import numpy as np
import pytest

from advnf.autodiff import graph
from advnf.autodiff.gradcheck import max_relative_error
from advnf.core.errors import ContractError, DomainError, NumericError, ShapeError


def _grad_of(fn, value):
    leaf = graph.parameter(value)
    graph.backward(fn(leaf))
    return leaf.grad


def test_matmul_identity_and_hand_product():
    right = graph.constant([[3.0, 4.0], [5.0, 6.0]])
    assert graph.matmul(graph.constant(np.eye(2)), right).value.tolist() == [[3.0, 4.0], [5.0, 6.0]]
    product = graph.matmul(graph.constant([[1.0, 2.0]]), graph.constant([[3.0], [4.0]]))
    assert product.value.tolist() == [[11.0]]


def test_matmul_rejects_mismatched_inner_dimensions():
    with pytest.raises(ShapeError):
        graph.matmul(graph.constant(np.ones((2, 3))), graph.constant(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    b = rng.normal(size=(3, 4))
    error = max_relative_error(lambda a: graph.reduce_sum(graph.matmul(a, b)), rng.normal(size=(2, 3)))
    assert error < 1e-6


@pytest.mark.parametrize(
    "op,value,expected,grad",
    [
        (graph.tanh, 0.0, 0.0, 1.0),
        (graph.sigmoid, 0.0, 0.5, 0.25),
        (graph.relu, -3.0, 0.0, 0.0),
    ],
)
def test_activation_values_and_gradients_at_fixed_points(op, value, expected, grad):
    leaf = graph.parameter(value)
    out = op(leaf)
    graph.backward(out)
    assert out.item() == pytest.approx(expected)
    assert float(leaf.grad) == pytest.approx(grad)


def test_reductions():
    values = graph.parameter([1.0, 2.0, 3.0])
    mean = graph.reduce_mean(values)
    assert mean.item() == pytest.approx(2.0)
    graph.backward(mean)
    assert values.grad.tolist() == pytest.approx([1 / 3, 1 / 3, 1 / 3])

    unchanged = graph.reduce_sum(graph.constant([[1.0, 2.0]]), axis=())
    assert unchanged.value.tolist() == [[1.0, 2.0]]


def test_concat_and_mask_select():
    assert graph.concat([graph.constant([1.0, 2.0]), graph.constant([3.0])], axis=0).value.tolist() == [1, 2, 3]
    picked = graph.mask_select(graph.constant([5.0, 6.0, 7.0, 8.0]), [1, 0, 1, 0])
    assert picked.value.tolist() == [5.0, 7.0]


def test_mask_select_backward_leaves_unselected_slots_at_zero():
    grad = _grad_of(lambda x: graph.reduce_sum(graph.mask_select(x, [1, 0, 1, 0])), [5.0, 6.0, 7.0, 8.0])
    assert grad.tolist() == [1.0, 0.0, 1.0, 0.0]


def test_mask_merge_inverts_mask_select():
    mask = np.array([0, 1, 1, 0])
    x = graph.constant([[1.0, 2.0, 3.0, 4.0]])
    merged = graph.mask_merge(graph.mask_select(x, mask), graph.mask_select(x, 1 - mask), mask)
    assert merged.value.tolist() == x.value.tolist()


def test_mask_select_rejects_non_binary_mask():
    with pytest.raises(ShapeError):
        graph.mask_select(graph.constant([1.0, 2.0]), [0.5, 1.0])


def test_backward_square_and_diamond_accumulation():
    assert float(_grad_of(graph.square, 3.0)) == pytest.approx(6.0)
    assert float(_grad_of(lambda x: graph.add(x, x), 1.5)) == pytest.approx(2.0)


def test_backward_through_dense_tanh_layer_matches_finite_differences():
    rng = np.random.default_rng(1)
    weight = rng.normal(size=(4, 3))

    def fn(x):
        return graph.reduce_sum(graph.tanh(graph.matmul(graph.constant(weight), x)))

    assert max_relative_error(fn, rng.normal(size=(3, 2))) < 1e-6


@pytest.mark.parametrize(
    "fn,value",
    [
        (lambda x: graph.reduce_sum(graph.softplus(x)), [-2.0, 0.3, 4.0]),
        (lambda x: graph.reduce_sum(graph.sqrt(x)), [0.5, 1.0, 3.0]),
        (lambda x: graph.reduce_sum(graph.mul(graph.cos(x), graph.sin(x))), [0.1, 1.2, 2.9]),
        (lambda x: graph.reduce_sum(graph.arctan(x)), [-1.5, 0.0, 2.0]),
        (lambda x: graph.logsumexp(x, axis=0), [0.2, -1.0, 3.0]),
        (lambda x: graph.reduce_sum(graph.div(graph.exp(x), graph.add(graph.square(x), 1.0))), [0.1, -0.7]),
        (lambda x: graph.reduce_sum(graph.square(graph.take(x, [0, 2, 2, 1]))), [1.0, -2.0, 0.5]),
    ],
)
def test_extra_ops_pass_finite_difference_check(fn, value):
    assert max_relative_error(fn, np.asarray(value)) < 1e-6


def test_constants_receive_no_gradient():
    const = graph.constant([1.0, 2.0])
    leaf = graph.parameter([3.0, 4.0])
    graph.backward(graph.reduce_sum(graph.mul(const, leaf)))
    assert const.grad is None
    assert leaf.grad.tolist() == [1.0, 2.0]


def test_zero_grad_resets_accumulated_gradients():
    leaf = graph.parameter(2.0)
    graph.backward(graph.square(leaf))
    graph.backward(graph.square(leaf))
    assert float(leaf.grad) == pytest.approx(8.0)
    graph.zero_grad([leaf])
    assert float(leaf.grad) == 0.0


def test_domain_and_numeric_errors():
    with pytest.raises(DomainError):
        graph.log(graph.constant([1.0, 0.0]))
    with pytest.raises(DomainError):
        graph.div(graph.constant(1.0), graph.constant(0.0))
    with pytest.raises(NumericError):
        graph.exp(graph.constant(1000.0))


def test_backward_needs_a_scalar_root():
    with pytest.raises(ContractError):
        graph.backward(graph.parameter([1.0, 2.0]))

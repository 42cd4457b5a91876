"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation builds a new :class:`Node` holding its forward value, the
nodes it was computed from and a rule mapping the upstream gradient to one
gradient per parent. The graph is rebuilt for every minibatch and
:func:`backward` walks it once in reverse topological order.

Nodes created with :func:`constant` never receive gradients, and an
operation whose parents are all constants records no backward rule, so
data and conditions flow through the same code path at no extra cost.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from advnf.core.errors import ContractError, DomainError, NumericError, ShapeError

ArrayLike = Union[float, int, Sequence, np.ndarray]
BackwardRule = Callable[[np.ndarray], tuple]
Axes = Optional[Union[int, tuple[int, ...]]]


class Node:
    __slots__ = ("value", "parents", "backward_rule", "grad", "requires_grad", "name")

    def __init__(
        self,
        value: ArrayLike,
        parents: tuple["Node", ...] = (),
        backward_rule: Optional[BackwardRule] = None,
        requires_grad: bool = False,
        name: str = "",
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.backward_rule = backward_rule
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __add__(self, other: "NodeLike") -> "Node":
        return add(self, other)

    def __radd__(self, other: "NodeLike") -> "Node":
        return add(other, self)

    def __sub__(self, other: "NodeLike") -> "Node":
        return sub(self, other)

    def __rsub__(self, other: "NodeLike") -> "Node":
        return sub(other, self)

    def __mul__(self, other: "NodeLike") -> "Node":
        return mul(self, other)

    def __rmul__(self, other: "NodeLike") -> "Node":
        return mul(other, self)

    def __truediv__(self, other: "NodeLike") -> "Node":
        return div(self, other)

    def __rtruediv__(self, other: "NodeLike") -> "Node":
        return div(other, self)

    def __neg__(self) -> "Node":
        return neg(self)

    def __matmul__(self, other: "NodeLike") -> "Node":
        return matmul(self, other)

    def __repr__(self) -> str:
        kind = "param" if self.requires_grad and not self.parents else self.name or "node"
        return f"Node({kind}, shape={self.shape})"


NodeLike = Union[Node, ArrayLike]


def constant(value: ArrayLike, name: str = "const") -> Node:
    return Node(value, name=name)


def parameter(value: ArrayLike, name: str = "param") -> Node:
    return Node(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)


def as_node(value: NodeLike) -> Node:
    return value if isinstance(value, Node) else constant(value)


def _check_finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values")
    return value


def _record(value: np.ndarray, parents: tuple[Node, ...], rule: BackwardRule, op: str) -> Node:
    value = _check_finite(np.asarray(value, dtype=np.float64), op)
    if any(parent.requires_grad for parent in parents):
        return Node(value, parents, rule, requires_grad=True, name=op)
    return Node(value, name=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Node, b: Node, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# ---------------------------------------------------------------------------
# Binary elementwise ops


def add(a: NodeLike, b: NodeLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "add")

    def rule(g: np.ndarray) -> tuple:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.value + b.value, (a, b), rule, "add")


def sub(a: NodeLike, b: NodeLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "sub")

    def rule(g: np.ndarray) -> tuple:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.value - b.value, (a, b), rule, "sub")


def mul(a: NodeLike, b: NodeLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "mul")

    def rule(g: np.ndarray) -> tuple:
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _record(a.value * b.value, (a, b), rule, "mul")


def div(a: NodeLike, b: NodeLike) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape(a, b, "div")
    if np.any(b.value == 0.0):
        raise DomainError("div: division by zero")

    def rule(g: np.ndarray) -> tuple:
        return (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
        )

    return _record(a.value / b.value, (a, b), rule, "div")


def matmul(a: NodeLike, b: NodeLike) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} x {b.shape})")

    def rule(g: np.ndarray) -> tuple:
        return g @ b.value.T, a.value.T @ g

    return _record(a.value @ b.value, (a, b), rule, "matmul")


# ---------------------------------------------------------------------------
# Unary elementwise ops


def neg(a: NodeLike) -> Node:
    a = as_node(a)
    return _record(-a.value, (a,), lambda g: (-g,), "neg")


def square(a: NodeLike) -> Node:
    a = as_node(a)
    return _record(a.value * a.value, (a,), lambda g: (2.0 * a.value * g,), "square")


def tanh(a: NodeLike) -> Node:
    a = as_node(a)
    out = np.tanh(a.value)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: NodeLike) -> Node:
    a = as_node(a)
    active = (a.value > 0.0).astype(np.float64)
    return _record(a.value * active, (a,), lambda g: (g * active,), "relu")


def sigmoid(a: NodeLike) -> Node:
    a = as_node(a)
    out = expit(a.value)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: NodeLike) -> Node:
    a = as_node(a)
    out = np.logaddexp(0.0, a.value)
    return _record(out, (a,), lambda g: (g * expit(a.value),), "softplus")


def exp(a: NodeLike) -> Node:
    a = as_node(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return _record(out, (a,), lambda g: (g * out,), "exp")


def log(a: NodeLike) -> Node:
    a = as_node(a)
    if np.any(a.value <= 0.0):
        raise DomainError("log of a nonpositive value")
    return _record(np.log(a.value), (a,), lambda g: (g / a.value,), "log")


def sqrt(a: NodeLike) -> Node:
    a = as_node(a)
    # gradient is singular at zero, so zero is excluded together with negatives
    if np.any(a.value <= 0.0):
        raise DomainError("sqrt of a nonpositive value")
    out = np.sqrt(a.value)
    return _record(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def cos(a: NodeLike) -> Node:
    a = as_node(a)
    return _record(np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),), "cos")


def sin(a: NodeLike) -> Node:
    a = as_node(a)
    return _record(np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),), "sin")


def arctan(a: NodeLike) -> Node:
    a = as_node(a)
    return _record(
        np.arctan(a.value), (a,), lambda g: (g / (1.0 + a.value * a.value),), "arctan"
    )


def clip(a: NodeLike, lower: float, upper: float) -> Node:
    a = as_node(a)
    inside = ((a.value >= lower) & (a.value <= upper)).astype(np.float64)
    return _record(np.clip(a.value, lower, upper), (a,), lambda g: (g * inside,), "clip")


# ---------------------------------------------------------------------------
# Reductions


def _normalize_axes(axis: Axes, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for {ndim}-D input")
        normalized.append(ax % ndim)
    return tuple(sorted(set(normalized)))


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axes: tuple[int, ...], keepdims: bool):
    if not keepdims:
        for ax in axes:
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(a: NodeLike, axis: Axes = None, keepdims: bool = False) -> Node:
    a = as_node(a)
    axes = _normalize_axes(axis, a.value.ndim)
    out = a.value.sum(axis=axes, keepdims=keepdims)

    def rule(g: np.ndarray) -> tuple:
        return (np.array(_expand_reduced(g, a.shape, axes, keepdims)),)

    return _record(out, (a,), rule, "sum")


def reduce_mean(a: NodeLike, axis: Axes = None, keepdims: bool = False) -> Node:
    a = as_node(a)
    axes = _normalize_axes(axis, a.value.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    if count == 0:
        raise ShapeError("mean over an empty axis")
    out = a.value.sum(axis=axes, keepdims=keepdims) / count

    def rule(g: np.ndarray) -> tuple:
        return (np.array(_expand_reduced(g, a.shape, axes, keepdims)) / count,)

    return _record(out, (a,), rule, "mean")


def logsumexp(a: NodeLike, axis: int = -1) -> Node:
    a = as_node(a)
    shift = np.max(a.value, axis=axis, keepdims=True)
    shifted = exp(sub(a, constant(shift)))
    total = reduce_sum(shifted, axis=axis)
    return add(log(total), constant(np.squeeze(shift, axis=axis)))


# ---------------------------------------------------------------------------
# Structural ops


def concat(parts: Iterable[NodeLike], axis: int = 0) -> Node:
    nodes = [as_node(part) for part in parts]
    if not nodes:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([node.value for node in nodes], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[n.shape for n in nodes]}") from exc
    sizes = [node.shape[axis] for node in nodes]
    splits = np.cumsum(sizes)[:-1]

    def rule(g: np.ndarray) -> tuple:
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(nodes), rule, "concat")


def _as_mask(mask: ArrayLike, a: Node) -> np.ndarray:
    raw = np.asarray(mask)
    if not np.all((raw == 0) | (raw == 1)):
        raise ShapeError("mask must be binary")
    if raw.ndim > a.value.ndim or a.shape[a.value.ndim - raw.ndim:] != raw.shape:
        raise ShapeError(f"mask shape {raw.shape} does not match trailing dims of {a.shape}")
    return raw.astype(bool)


def mask_select(a: NodeLike, mask: ArrayLike) -> Node:
    """Gather the entries where ``mask`` is 1 along the trailing dimensions."""
    a = as_node(a)
    keep = _as_mask(mask, a)

    def rule(g: np.ndarray) -> tuple:
        full = np.zeros_like(a.value)
        full[..., keep] = g
        return (full,)

    return _record(a.value[..., keep], (a,), rule, "mask_select")


def mask_merge(selected: NodeLike, rest: NodeLike, mask: ArrayLike) -> Node:
    """Inverse of :func:`mask_select`: place ``selected`` on mask 1 and ``rest`` on mask 0."""
    selected, rest = as_node(selected), as_node(rest)
    keep = np.asarray(mask).astype(bool)
    n_keep = int(keep.sum())
    if selected.shape[-1] != n_keep or rest.shape[-1] != keep.size - n_keep:
        raise ShapeError(
            f"mask_merge: parts {selected.shape}/{rest.shape} do not fit mask with {n_keep} ones"
        )
    out = np.empty(selected.shape[:-1] + keep.shape, dtype=np.float64)
    out[..., keep] = selected.value
    out[..., ~keep] = rest.value

    def rule(g: np.ndarray) -> tuple:
        return g[..., keep], g[..., ~keep]

    return _record(out, (selected, rest), rule, "mask_merge")


def take(a: NodeLike, indices: ArrayLike, axis: int = -1) -> Node:
    """Index gather along ``axis``; repeated indices accumulate in the backward pass."""
    a = as_node(a)
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % a.value.ndim
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise ShapeError(f"take: index out of range for axis of size {a.shape[axis]}")

    def rule(g: np.ndarray) -> tuple:
        moved = np.moveaxis(np.zeros_like(a.value), axis, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        np.add.at(flat, (slice(None), idx), np.moveaxis(g, axis, -1).reshape(flat.shape[0], -1))
        return (np.moveaxis(flat.reshape(moved.shape), -1, axis),)

    return _record(np.take(a.value, idx, axis=axis), (a,), rule, "take")


def reshape(a: NodeLike, shape: tuple[int, ...]) -> Node:
    a = as_node(a)
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc
    return _record(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


# ---------------------------------------------------------------------------
# Backward pass


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``grad`` of every reachable node.

    Gradients add onto whatever ``grad`` already holds, so callers reset
    with :func:`zero_grad` between optimizer steps.
    """
    if root.value.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return

    pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(_topological_order(root)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        if node.backward_rule is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_rule(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad


def zero_grad(nodes: Iterable[Node]) -> None:
    for node in nodes:
        node.zero_grad()

"""Parameter containers for the conditioner and discriminator networks."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.core.errors import CheckpointError, ContractError

HIDDEN_ACTIVATIONS = {"relu": graph.relu, "tanh": graph.tanh}
OUTPUT_ACTIVATIONS = {"linear": None, "tanh": graph.tanh, "sigmoid": graph.sigmoid}


class Module:
    def _children(self) -> Iterator[tuple[str, "Module"]]:
        return iter(())

    def _own_parameters(self) -> Iterator[tuple[str, Node]]:
        return iter(())

    def named_parameters(self, prefix: str = "") -> dict[str, Node]:
        params: dict[str, Node] = {}
        for name, node in self._own_parameters():
            params[f"{prefix}{name}"] = node
        for child_name, child in self._children():
            params.update(child.named_parameters(f"{prefix}{child_name}."))
        return params

    def parameters(self) -> list[Node]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        graph.zero_grad(self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(
                f"parameter names differ (missing={missing[:3]}, unexpected={unexpected[:3]})"
            )
        for name, node in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != node.shape:
                raise CheckpointError(f"{name}: shape {value.shape} != {node.shape}")
            node.value = value.copy()
            node.zero_grad()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, zero_init: bool = False):
        if n_in < 1 or n_out < 1:
            raise ContractError(f"Linear needs positive sizes, got {n_in}->{n_out}")
        if zero_init:
            weight = np.zeros((n_in, n_out))
        else:
            bound = 1.0 / np.sqrt(n_in)
            weight = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.weight = graph.parameter(weight, name="weight")
        self.bias = graph.parameter(np.zeros(n_out), name="bias")

    def _own_parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def __call__(self, x: Node) -> Node:
        return graph.matmul(x, self.weight) + self.bias


class MLP(Module):
    """Dense stack; hidden layers share one activation, the last layer has its own."""

    def __init__(
        self,
        n_in: int,
        hidden: Sequence[int],
        n_out: int,
        rng: np.random.Generator,
        activation: str = "relu",
        output_activation: str = "linear",
        zero_init_output: bool = False,
    ):
        if activation not in HIDDEN_ACTIVATIONS:
            raise ContractError(f"unknown activation {activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractError(f"unknown output activation {output_activation!r}")
        widths = [n_in, *hidden, n_out]
        self.layers = [
            Linear(
                widths[i],
                widths[i + 1],
                rng,
                zero_init=zero_init_output and i == len(widths) - 2,
            )
            for i in range(len(widths) - 1)
        ]
        self.activation = activation
        self.output_activation = output_activation

    def _children(self):
        for i, layer in enumerate(self.layers):
            yield f"linear{i}", layer

    def __call__(self, x: Node) -> Node:
        hidden_fn = HIDDEN_ACTIVATIONS[self.activation]
        for layer in self.layers[:-1]:
            x = hidden_fn(layer(x))
        x = self.layers[-1](x)
        out_fn = OUTPUT_ACTIVATIONS[self.output_activation]
        return out_fn(x) if out_fn is not None else x

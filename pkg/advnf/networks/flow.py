"""Stack of conditional coupling layers over a fixed base distribution."""

import math

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.autodiff.nn import Module
from advnf.core.errors import ContractError, ShapeError
from advnf.models.flow import FlowSpec
from advnf.networks.coupling import CouplingLayer

LOG_TWO_PI = math.log(2.0 * math.pi)


def alternate_masks(dim: int, n_layers: int) -> list[np.ndarray]:
    """Even coordinates pass through on even layers, odd coordinates on odd layers."""
    index = np.arange(dim)
    return [((index % 2) == (layer % 2)).astype(np.float64) for layer in range(n_layers)]


def checkerboard_masks(n: int, n_layers: int) -> list[np.ndarray]:
    rows, cols = np.divmod(np.arange(n * n), n)
    parity = (rows + cols) % 2
    return [(parity == (layer % 2)).astype(np.float64) for layer in range(n_layers)]


def build_masks(spec: FlowSpec) -> list[np.ndarray]:
    if spec.mask_kind == "checkerboard":
        return checkerboard_masks(spec.lattice_size, spec.n_layers)
    return alternate_masks(spec.dim, spec.n_layers)


class FlowModel(Module):
    def __init__(self, spec: FlowSpec, rng: np.random.Generator):
        self.spec = spec
        self.masks = build_masks(spec)
        self.layers = [
            CouplingLayer(mask, spec.cond_dim, spec.hidden, rng) for mask in self.masks
        ]

    def _children(self):
        for i, layer in enumerate(self.layers):
            yield f"layer{i}", layer

    @property
    def dim(self) -> int:
        return self.spec.dim

    # -- condition embedding ---------------------------------------------

    def condition_batch(self, c, batch: int) -> Node:
        """Constant (batch, cond_dim) node repeating the embedding of ``c``."""
        embedding = np.asarray(c.embedding() if hasattr(c, "embedding") else c, dtype=np.float64).reshape(-1)
        if embedding.size != self.spec.cond_dim:
            raise ShapeError(f"condition embedding has {embedding.size} values, flow expects {self.spec.cond_dim}")
        return graph.constant(np.tile(embedding, (batch, 1)))

    # -- base distribution -----------------------------------------------

    def sample_base(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 0:
            raise ContractError("sample count must be >= 0")
        if self.spec.base == "uniform":
            bound = self.spec.uniform_bound
            return rng.uniform(-bound, bound, size=(n, self.dim))
        return rng.standard_normal((n, self.dim))

    def base_log_prob_array(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        if self.spec.base == "uniform":
            bound = self.spec.uniform_bound
            inside = np.all(np.abs(z) <= bound, axis=1)
            return np.where(inside, -self.dim * math.log(2.0 * bound), -np.inf)
        return -0.5 * np.sum(z * z, axis=1) - 0.5 * self.dim * LOG_TWO_PI

    def base_log_prob(self, z: Node) -> Node:
        if self.spec.base == "uniform":
            # flat inside the box; a point outside makes the next op raise NumericError
            return graph.constant(self.base_log_prob_array(z.value))
        return graph.add(
            graph.mul(graph.reduce_sum(graph.square(z), axis=1), -0.5), -0.5 * self.dim * LOG_TWO_PI
        )

    # -- bijection -------------------------------------------------------

    @property
    def output_offset(self) -> float:
        return self.spec.tan_offset if self.spec.projection == "tan" else 0.0

    def forward(self, z: Node, cond: Node) -> tuple[Node, Node]:
        """Base -> flow space through every layer; returns (x, log|det dx/dz|)."""
        log_det = graph.constant(np.zeros(z.shape[0]))
        for layer in self.layers:
            z, layer_log_det = layer.forward(z, cond)
            log_det = graph.add(log_det, layer_log_det)
        if self.output_offset:
            z = graph.add(z, self.output_offset)
        return z, log_det

    def inverse(self, x: Node, cond: Node) -> tuple[Node, Node]:
        """Flow space -> base in reverse layer order; returns (z, log|det dz/dx|)."""
        log_det = graph.constant(np.zeros(x.shape[0]))
        if self.output_offset:
            x = graph.sub(x, self.output_offset)
        for layer in reversed(self.layers):
            x, layer_log_det = layer.inverse(x, cond)
            log_det = graph.add(log_det, layer_log_det)
        return x, log_det

from typing import Sequence

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.autodiff.nn import MLP, Module
from advnf.core.errors import ContractError, NumericError, ShapeError


class CouplingLayer(Module):
    """Conditional affine coupling.

    Dimensions where ``mask`` is 1 pass through and, together with the
    condition embedding, feed two conditioner networks; the remaining
    dimensions are scaled by exp(s) and shifted by t.
    """

    def __init__(
        self,
        mask: Sequence[float],
        cond_dim: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
        activation: str = "relu",
    ):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim != 1 or not np.all((mask == 0.0) | (mask == 1.0)):
            raise ContractError("coupling mask must be a binary vector")
        if mask.min() == mask.max():
            raise ContractError("coupling mask needs at least one 0 and one 1")
        self.mask = mask
        self.complement = 1.0 - mask
        self.dim = mask.size
        self.cond_dim = cond_dim
        n_pass = int(mask.sum())
        n_move = self.dim - n_pass
        self.scale_net = MLP(
            n_pass + cond_dim, hidden, n_move, rng,
            activation=activation, output_activation="tanh", zero_init_output=True,
        )
        self.translate_net = MLP(
            n_pass + cond_dim, hidden, n_move, rng,
            activation=activation, output_activation="linear", zero_init_output=True,
        )

    def _children(self):
        yield "scale_net", self.scale_net
        yield "translate_net", self.translate_net

    def _scale_shift(self, passive: Node, cond: Node) -> tuple[Node, Node]:
        if cond.shape != (passive.shape[0], self.cond_dim):
            raise ShapeError(f"condition batch {cond.shape} != ({passive.shape[0]}, {self.cond_dim})")
        h = graph.concat([passive, cond], axis=1)
        s = self.scale_net(h)
        t = self.translate_net(h)
        if not (np.all(np.isfinite(s.value)) and np.all(np.isfinite(t.value))):
            raise NumericError("coupling conditioner produced non-finite scale or shift")
        return s, t

    def _split(self, v: Node) -> tuple[Node, Node]:
        if v.value.ndim != 2 or v.shape[1] != self.dim:
            raise ShapeError(f"expected a (B, {self.dim}) batch, got {v.shape}")
        return graph.mask_select(v, self.mask), graph.mask_select(v, self.complement)

    def forward(self, z: Node, cond: Node) -> tuple[Node, Node]:
        """z -> x with per-row log|det dx/dz|."""
        passive, active = self._split(z)
        s, t = self._scale_shift(passive, cond)
        moved = graph.add(graph.mul(active, graph.exp(s)), t)
        return graph.mask_merge(passive, moved, self.mask), graph.reduce_sum(s, axis=1)

    def inverse(self, x: Node, cond: Node) -> tuple[Node, Node]:
        """x -> z with per-row log|det dz/dx|."""
        passive, active = self._split(x)
        s, t = self._scale_shift(passive, cond)
        moved = graph.mul(graph.sub(active, t), graph.exp(graph.neg(s)))
        return graph.mask_merge(passive, moved, self.mask), graph.neg(graph.reduce_sum(s, axis=1))

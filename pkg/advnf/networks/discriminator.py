import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.autodiff.nn import MLP, Module
from advnf.core.errors import ShapeError
from advnf.models.flow import DiscriminatorSpec

# logits are clamped here so that D stays strictly inside (0, 1)
LOGIT_CLAMP = 30.0


class Discriminator(Module):
    """Dense classifier scoring (sample, condition) pairs as real."""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        self.spec = spec
        width = 2 * spec.dim if spec.features == "circular" else spec.dim
        self.net = MLP(width + spec.cond_dim, spec.hidden, 1, rng, activation="relu")

    def _children(self):
        yield "net", self.net

    def features(self, x: Node) -> Node:
        if x.value.ndim != 2 or x.shape[1] != self.spec.dim:
            raise ShapeError(f"discriminator expects (B, {self.spec.dim}) samples, got {x.shape}")
        if self.spec.features == "circular":
            return graph.concat([graph.cos(x), graph.sin(x)], axis=1)
        return x

    def logit(self, x: Node, cond: Node) -> Node:
        raw = self.net(graph.concat([self.features(x), cond], axis=1))
        return graph.reshape(graph.clip(raw, -LOGIT_CLAMP, LOGIT_CLAMP), (x.shape[0],))

    def probability(self, x: Node, cond: Node) -> Node:
        return graph.sigmoid(self.logit(x, cond))

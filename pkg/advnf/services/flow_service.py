import logging

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.core.errors import ContractError, NumericError
from advnf.networks import projection
from advnf.networks.flow import FlowModel

logger = logging.getLogger(__name__)

# rounds of base redraws for flow images outside the projection's reachable range
_MAX_SUPPORT_REDRAWS = 100


class FlowService:
    def _as_batch(self, model: FlowModel, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.ndim != 2 or x.shape[1] != model.dim:
            raise ContractError(f"expected (B, {model.dim}) data, got shape {x.shape}")
        return x

    def _project_data(self, model: FlowModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        spec = model.spec
        y, log_jac = projection.project(x, spec.projection, spec.alpha)
        if not np.all(np.isfinite(y)):
            raise NumericError("projection overflowed at the boundary of its range")
        return y, np.sum(log_jac, axis=1)

    def flow_log_prob(self, model: FlowModel, x_data, c) -> Node:
        """Per-row log q(x; c) on the graph, gradients flowing to the flow parameters."""
        x = self._as_batch(model, x_data)
        y, projection_log_jac = self._project_data(model, x)
        z, log_det = model.inverse(graph.constant(y), model.condition_batch(c, len(y)))
        return graph.add(graph.add(model.base_log_prob(z), log_det), projection_log_jac)

    def flow_log_prob_array(self, model: FlowModel, x_data, c) -> np.ndarray:
        """Values of :meth:`flow_log_prob`; -inf where the base density vanishes."""
        x = self._as_batch(model, x_data)
        if len(x) == 0:
            return np.empty(0)
        y, projection_log_jac = self._project_data(model, x)
        z, log_det = model.inverse(graph.constant(y), model.condition_batch(c, len(y)))
        return model.base_log_prob_array(z.value) + log_det.value + projection_log_jac

    def draw_base(self, model: FlowModel, n: int, c, rng: np.random.Generator) -> np.ndarray:
        """Base draws whose flow image maps back into the data domain.

        Without a projection every draw qualifies. Otherwise rows landing
        outside the reachable range are redrawn; the kept draws follow the
        flow density restricted to the data domain. Raises NumericError only
        when a trained flow has moved nearly all its mass out of range.
        """
        z = model.sample_base(n, rng)
        if model.spec.projection == "none" or n == 0:
            return z
        cond = model.condition_batch(c, n)
        for _ in range(_MAX_SUPPORT_REDRAWS):
            y, _ = model.forward(graph.constant(z), cond)
            bad = ~projection.in_support(y.value, model.spec.projection, model.spec.alpha)
            if not bad.any():
                return z
            z[bad] = model.sample_base(int(bad.sum()), rng)
        raise NumericError("flow keeps mapping base draws outside the projection range")

    def push_forward(self, model: FlowModel, z: np.ndarray, c) -> tuple[Node, Node]:
        """Graph path base -> data space; returns (samples, log q of each sample).

        ``z`` should come from :meth:`draw_base` so every row is in range.
        """
        z_node = graph.constant(z)
        y, log_det = model.forward(z_node, model.condition_batch(c, len(z)))
        theta, inverse_log_jac = projection.unproject_graph(y, model.spec.projection, model.spec.alpha)
        log_q = graph.sub(
            graph.sub(model.base_log_prob(z_node), log_det),
            graph.reduce_sum(inverse_log_jac, axis=1),
        )
        return theta, log_q

    def flow_sample(self, model: FlowModel, n: int, c, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``n`` samples in data space together with their log q."""
        if n < 0:
            raise ContractError("sample count must be >= 0")
        if n == 0:
            return np.empty((0, model.dim)), np.empty(0)
        z = self.draw_base(model, n, c, rng)
        samples, log_q = self.push_forward(model, z, c)
        x, log_q = samples.value, log_q.value
        if model.spec.projection != "none":
            # rounding at the top of the range can land exactly on 2*pi
            wrapped = np.any(x >= projection.TWO_PI, axis=1)
            if wrapped.any():
                x = np.where(x >= projection.TWO_PI, 0.0, x)
                log_q = log_q.copy()
                log_q[wrapped] = self.flow_log_prob_array(model, x[wrapped], c)
        return x, log_q

    def forward_inverse_error(self, model: FlowModel, x_data, c) -> float:
        """Max-abs reconstruction error of forward(inverse(x)) in flow space."""
        x = self._as_batch(model, x_data)
        y, _ = self._project_data(model, x)
        cond = model.condition_batch(c, len(y))
        z, _ = model.inverse(graph.constant(y), cond)
        back, _ = model.forward(graph.constant(z.value), cond)
        return float(np.max(np.abs(back.value - y))) if len(y) else 0.0


flow_service = FlowService()

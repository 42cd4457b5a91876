import logging
import math
from typing import Union

import numpy as np
from scipy.special import logsumexp

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.core.errors import ContractError, DomainError
from advnf.models.synthetic import (
    MOGComponent,
    MOGParams,
    RingComponent,
    RingsParams,
    SyntheticCondition,
)

logger = logging.getLogger(__name__)

LOG_TWO_PI = math.log(2.0 * math.pi)
SyntheticParams = Union[MOGParams, RingsParams]

# Nonpositive radial draws are redrawn; this caps the loop for absurd sigma/radius ratios.
_MAX_RADIAL_REDRAWS = 1000


def default_mog4() -> MOGParams:
    cov = ((0.25, 0.0), (0.0, 0.25))
    means = ((2.0, 2.0), (-2.0, 2.0), (-2.0, -2.0), (2.0, -2.0))
    return MOGParams(
        components=tuple(MOGComponent(weight=0.25, mean=mean, covariance=cov) for mean in means)
    )


def default_mog8() -> MOGParams:
    cov = ((0.09, 0.0), (0.0, 0.09))
    angles = [k * math.pi / 4.0 for k in range(8)]
    return MOGParams(
        components=tuple(
            MOGComponent(weight=0.125, mean=(3.0 * math.cos(a), 3.0 * math.sin(a)), covariance=cov)
            for a in angles
        )
    )


def default_rings4() -> RingsParams:
    return RingsParams(
        rings=tuple(RingComponent(weight=0.25, radius=r, sigma=0.1) for r in (1.0, 2.0, 3.0, 4.0))
    )


DEFAULT_GEOMETRY = {
    "mog4": default_mog4,
    "mog8": default_mog8,
    "rings4": default_rings4,
}


def _as_points(x) -> tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[-1] != 2:
        raise ContractError(f"synthetic targets live in R^2, got trailing dim {points.shape[-1]}")
    return points, single


def _unwrap(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


class SyntheticService:
    # -- Gaussian pieces -------------------------------------------------

    def _gaussian_log_pdf(self, points: np.ndarray, component: MOGComponent) -> np.ndarray:
        cov = component.covariance_array()
        diff = points - component.mean_array()
        precision = np.linalg.inv(cov)
        quad = np.einsum("bi,ij,bj->b", diff, precision, diff)
        return -0.5 * quad - LOG_TWO_PI - 0.5 * math.log(np.linalg.det(cov))

    def _gaussian_log_pdf_graph(self, x: Node, component: MOGComponent) -> Node:
        cov = component.covariance_array()
        diff = graph.sub(x, component.mean_array())
        quad = graph.reduce_sum(graph.mul(graph.matmul(diff, np.linalg.inv(cov)), diff), axis=1)
        offset = -LOG_TWO_PI - 0.5 * math.log(np.linalg.det(cov))
        return graph.add(graph.mul(quad, -0.5), offset)

    def _radial_log_pdf(self, radius, ring: RingComponent):
        z = (radius - ring.radius) / ring.sigma
        return -0.5 * z * z - math.log(ring.sigma) - 0.5 * LOG_TWO_PI

    def _radii(self, points: np.ndarray) -> np.ndarray:
        radii = np.hypot(points[:, 0], points[:, 1])
        if np.any(radii == 0.0):
            raise DomainError("ring density is singular at the origin")
        return radii

    def _radii_graph(self, x: Node) -> Node:
        if np.any(np.hypot(x.value[:, 0], x.value[:, 1]) == 0.0):
            raise DomainError("ring density is singular at the origin")
        return graph.sqrt(graph.reduce_sum(graph.square(x), axis=1))

    # -- Densities -------------------------------------------------------

    def mog_log_density(self, x, params: MOGParams):
        """log sum_i a_i N(x; mu_i, Sigma_i) through log-sum-exp."""
        points, single = _as_points(x)
        terms = np.stack(
            [math.log(c.weight) + self._gaussian_log_pdf(points, c) for c in params.components],
            axis=1,
        )
        return _unwrap(logsumexp(terms, axis=1), single)

    def rings_log_density_cartesian(self, x, params: RingsParams):
        """Cartesian density of the rings family: the polar density divided by |x|."""
        points, single = _as_points(x)
        radii = self._radii(points)
        terms = np.stack(
            [math.log(ring.weight) + self._radial_log_pdf(radii, ring) for ring in params.rings],
            axis=1,
        )
        values = logsumexp(terms, axis=1) - LOG_TWO_PI - np.log(radii)
        return _unwrap(values, single)

    def log_density(self, x, params: SyntheticParams):
        if isinstance(params, MOGParams):
            return self.mog_log_density(x, params)
        return self.rings_log_density_cartesian(x, params)

    def _check_condition(self, c: SyntheticCondition, params: SyntheticParams) -> None:
        expected_kind = "mog-mean" if isinstance(params, MOGParams) else "ring-radius"
        if c.kind != expected_kind:
            raise ContractError(f"condition kind {c.kind!r} does not match {expected_kind!r} params")
        if c.component_index >= len(params):
            raise ContractError(
                f"condition indexes component {c.component_index} of {len(params)}"
            )

    def conditional_log_density(self, x, c: SyntheticCondition, params: SyntheticParams):
        """log p(x; c): density of the single component selected by ``c``."""
        self._check_condition(c, params)
        points, single = _as_points(x)
        if isinstance(params, MOGParams):
            values = self._gaussian_log_pdf(points, params.components[c.component_index])
        else:
            radii = self._radii(points)
            ring = params.rings[c.component_index]
            values = self._radial_log_pdf(radii, ring) - LOG_TWO_PI - np.log(radii)
        return _unwrap(values, single)

    def conditional_log_density_graph(
        self, x: Node, c: SyntheticCondition, params: SyntheticParams
    ) -> Node:
        self._check_condition(c, params)
        if isinstance(params, MOGParams):
            return self._gaussian_log_pdf_graph(x, params.components[c.component_index])
        radii = self._radii_graph(x)
        ring = params.rings[c.component_index]
        return graph.sub(
            graph.add(self._radial_log_pdf(radii, ring), -LOG_TWO_PI), graph.log(radii)
        )

    def log_density_graph(self, x: Node, params: SyntheticParams) -> Node:
        if isinstance(params, MOGParams):
            columns = [
                graph.reshape(graph.add(self._gaussian_log_pdf_graph(x, c), math.log(c.weight)), (-1, 1))
                for c in params.components
            ]
            return graph.logsumexp(graph.concat(columns, axis=1))
        radii = self._radii_graph(x)
        columns = [
            graph.reshape(graph.add(self._radial_log_pdf(radii, ring), math.log(ring.weight)), (-1, 1))
            for ring in params.rings
        ]
        mixture = graph.logsumexp(graph.concat(columns, axis=1))
        return graph.sub(graph.add(mixture, -LOG_TWO_PI), graph.log(radii))

    # -- Sampling --------------------------------------------------------

    def sample_component(
        self, params: SyntheticParams, index: int, n: int, rng: np.random.Generator
    ) -> np.ndarray:
        if n < 0:
            raise ContractError("sample count must be >= 0")
        if isinstance(params, MOGParams):
            component = params.components[index]
            chol = np.linalg.cholesky(component.covariance_array())
            return component.mean_array() + rng.standard_normal((n, 2)) @ chol.T
        ring = params.rings[index]
        radii = ring.radius + ring.sigma * rng.standard_normal(n)
        for _ in range(_MAX_RADIAL_REDRAWS):
            bad = radii <= 0.0
            if not bad.any():
                break
            radii[bad] = ring.radius + ring.sigma * rng.standard_normal(int(bad.sum()))
        else:
            raise DomainError("could not draw positive radii; sigma is too large for the radius")
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        return np.stack([radii * np.cos(theta), radii * np.sin(theta)], axis=1)

    def _sample_mixture(self, params: SyntheticParams, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 0:
            raise ContractError("sample count must be >= 0")
        items = params.components if isinstance(params, MOGParams) else params.rings
        weights = np.asarray([item.weight for item in items])
        labels = rng.choice(len(items), size=n, p=weights)
        points = np.empty((n, 2))
        for index in range(len(items)):
            chosen = labels == index
            points[chosen] = self.sample_component(params, index, int(chosen.sum()), rng)
        return points

    def sample_mog(self, params: MOGParams, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._sample_mixture(params, n, rng)

    def sample_rings(self, params: RingsParams, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._sample_mixture(params, n, rng)

    # -- Conditions and diagnostics -------------------------------------

    def conditions(self, params: SyntheticParams) -> list[SyntheticCondition]:
        if isinstance(params, MOGParams):
            return [
                SyntheticCondition(kind="mog-mean", value=c.mean, component_index=i)
                for i, c in enumerate(params.components)
            ]
        return [
            SyntheticCondition(kind="ring-radius", value=(ring.radius,), component_index=i)
            for i, ring in enumerate(params.rings)
        ]

    def mode_occupancy(self, points: np.ndarray, params: SyntheticParams, width: float = 3.0) -> list[float]:
        """Fraction of ``points`` within ``width`` sigma of each mode (radial band for rings)."""
        points, _ = _as_points(points)
        if len(points) == 0:
            return [0.0] * len(params)
        fractions = []
        if isinstance(params, MOGParams):
            for component in params.components:
                diff = points - component.mean_array()
                precision = np.linalg.inv(component.covariance_array())
                distance = np.sqrt(np.einsum("bi,ij,bj->b", diff, precision, diff))
                fractions.append(float(np.mean(distance <= width)))
        else:
            radii = np.hypot(points[:, 0], points[:, 1])
            for ring in params.rings:
                fractions.append(float(np.mean(np.abs(radii - ring.radius) <= width * ring.sigma)))
        return fractions


synthetic_service = SyntheticService()

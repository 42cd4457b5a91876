"""Central finite-difference checks for the analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from advnf.autodiff import graph
from advnf.autodiff.graph import Node


def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = fn(x)
        flat[i] = original - h
        lower = fn(x)
        flat[i] = original
        grad_flat[i] = (upper - lower) / (2.0 * h)
    return grad


def analytic_gradient(fn: Callable[[Node], Node], x: np.ndarray) -> np.ndarray:
    leaf = graph.parameter(x)
    graph.backward(fn(leaf))
    return leaf.grad


def max_relative_error(
    fn: Callable[[Node], Node],
    x: np.ndarray,
    h: float = 1e-5,
    abs_floor: float = 1e-7,
) -> float:
    """Largest elementwise relative error; entries closer than ``abs_floor`` count as exact."""
    analytic = analytic_gradient(fn, x)
    numeric = numerical_gradient(lambda arr: fn(graph.constant(arr)).item(), x, h)
    diff = np.abs(analytic - numeric)
    relative = np.where(diff <= abs_floor, 0.0, diff / np.maximum(np.abs(numeric), abs_floor))
    return float(np.max(relative)) if relative.size else 0.0

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from advnf.autodiff.graph import Node
from advnf.core.errors import ShapeError, TrainingError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def moments_for(self, name: str, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.first_moment:
            self.first_moment[name] = np.zeros(shape)
            self.second_moment[name] = np.zeros(shape)
        return self.first_moment[name], self.second_moment[name]


def adam_step(
    state: AdamState,
    params: Mapping[str, Node],
    grads: Mapping[str, np.ndarray],
    lr: float,
) -> None:
    """One bias-corrected Adam update, applied in place to ``params``.

    Every gradient is validated before any parameter moves, so a rejected
    step leaves both the parameters and the moment estimates untouched.
    """
    for name, node in params.items():
        grad = grads[name]
        if grad.shape != node.shape:
            raise ShapeError(f"{name}: gradient shape {grad.shape} != parameter {node.shape}")
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient for {name}; Adam step aborted")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, node in params.items():
        grad = grads[name]
        m, v = state.moments_for(name, node.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        node.value = node.value - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def piecewise_constant_lr(
    base_lr: float,
    iteration: int,
    total_iterations: int,
    boundaries: Sequence[float] = (0.5, 0.75),
    factor: float = 0.5,
) -> float:
    """Learning rate multiplied by ``factor`` at each boundary (fractions of the run)."""
    lr = base_lr
    for boundary in boundaries:
        if total_iterations > 0 and iteration >= boundary * total_iterations:
            lr *= factor
    return lr


def scheduled_value(schedule: Sequence[tuple[int, float]], iteration: int) -> float:
    """Piecewise-constant lookup: value of the last entry whose iteration <= ``iteration``."""
    value = schedule[0][1]
    for start, entry_value in schedule:
        if iteration >= start:
            value = entry_value
    return value

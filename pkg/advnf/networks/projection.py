"""Maps between spin angles in [0, 2pi) and the real line the flow works on.

Each map is elementwise. ``project_*`` goes angle -> real and returns
log|dx/dtheta|; ``inverse_*`` goes real -> angle and returns log|dtheta/dx|.
"""

import math

import numpy as np
from scipy.special import expit, logit

from advnf.autodiff import graph
from advnf.autodiff.graph import Node
from advnf.core.errors import ContractError, DomainError
from advnf.models.lattice import TWO_PI

DEFAULT_ALPHA = 1e-4
PROJECTIONS = ("none", "tan", "sigmoid")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 0.5:
        raise ContractError(f"alpha must lie in (0, 0.5), got {alpha}")


def check_angles(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all((theta >= 0.0) & (theta < TWO_PI)):
        raise DomainError("angles must lie in [0, 2pi)")
    return theta


def project_tan(theta, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    _check_alpha(alpha)
    theta = check_angles(theta)
    u = alpha + (1.0 - 2.0 * alpha) * theta / 4.0
    x = np.tan(u)
    log_jac = math.log((1.0 - 2.0 * alpha) / 4.0) - 2.0 * np.log(np.cos(u))
    return x, log_jac


def inverse_tan(x, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    _check_alpha(alpha)
    x = np.asarray(x, dtype=np.float64)
    theta = 4.0 * (np.arctan(x) - alpha) / (1.0 - 2.0 * alpha)
    if not np.all((theta >= 0.0) & (theta < TWO_PI)):
        raise DomainError(f"tan projection only reaches [tan(alpha), ...); got values below {math.tan(alpha):.6g}")
    log_jac = math.log(4.0 / (1.0 - 2.0 * alpha)) - np.log1p(x * x)
    return theta, log_jac


def project_sigmoid(theta, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    _check_alpha(alpha)
    theta = check_angles(theta)
    u = alpha + (1.0 - 2.0 * alpha) * theta / TWO_PI
    x = logit(u)
    log_jac = math.log((1.0 - 2.0 * alpha) / TWO_PI) - np.log(u) - np.log1p(-u)
    return x, log_jac


def inverse_sigmoid(x, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    _check_alpha(alpha)
    x = np.asarray(x, dtype=np.float64)
    theta = TWO_PI * (expit(x) - alpha) / (1.0 - 2.0 * alpha)
    if not np.all((theta >= 0.0) & (theta < TWO_PI)):
        raise DomainError("sigmoid projection only reaches [logit(alpha), logit(1 - alpha))")
    # log(u (1 - u)) = -softplus(-x) - softplus(x)
    log_jac = math.log(TWO_PI / (1.0 - 2.0 * alpha)) - np.logaddexp(0.0, -x) - np.logaddexp(0.0, x)
    return theta, log_jac


_FORWARD = {"tan": project_tan, "sigmoid": project_sigmoid}
_INVERSE = {"tan": inverse_tan, "sigmoid": inverse_sigmoid}


def _check_kind(kind: str) -> None:
    if kind not in PROJECTIONS:
        raise ContractError(f"unknown projection {kind!r}; expected one of {PROJECTIONS}")


def project(theta, kind: str, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    _check_kind(kind)
    if kind == "none":
        values = np.asarray(theta, dtype=np.float64)
        return values, np.zeros_like(values)
    return _FORWARD[kind](theta, alpha)


def unproject(x, kind: str, alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    _check_kind(kind)
    if kind == "none":
        values = np.asarray(x, dtype=np.float64)
        return values, np.zeros_like(values)
    return _INVERSE[kind](x, alpha)


def in_support(x: np.ndarray, kind: str, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Rows of a (B, D) batch whose every coordinate maps back to an angle in [0, 2pi)."""
    _check_kind(kind)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if kind == "none":
        return np.all(np.isfinite(x), axis=1)
    if kind == "tan":
        theta = 4.0 * (np.arctan(x) - alpha) / (1.0 - 2.0 * alpha)
    else:
        theta = TWO_PI * (expit(x) - alpha) / (1.0 - 2.0 * alpha)
    return np.all((theta >= 0.0) & (theta < TWO_PI), axis=1)


def unproject_graph(x: Node, kind: str, alpha: float = DEFAULT_ALPHA) -> tuple[Node, Node]:
    """Graph form of :func:`unproject`; callers keep ``x`` inside :func:`in_support`."""
    _check_kind(kind)
    if kind == "none":
        return x, graph.constant(np.zeros(x.shape))
    if kind == "tan":
        scale = 4.0 / (1.0 - 2.0 * alpha)
        theta = graph.mul(graph.sub(graph.arctan(x), alpha), scale)
        log_jac = graph.sub(math.log(scale), graph.log(graph.add(graph.square(x), 1.0)))
        return theta, log_jac
    scale = TWO_PI / (1.0 - 2.0 * alpha)
    theta = graph.mul(graph.sub(graph.sigmoid(x), alpha), scale)
    log_jac = graph.sub(
        graph.sub(math.log(scale), graph.softplus(graph.neg(x))), graph.softplus(x)
    )
    return theta, log_jac

"""
Adam on the flattened box parameters.

The update is the standard bias-corrected one:
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    x = x - (lr / (1 - b1^t)) * m / (sqrt(v / (1 - b2^t)) + eps)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from boxtraj.errors import LengthMismatch
from boxtraj.optimization.gradient import GradVector


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for a fixed number of parameters."""

    size: int
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"size must be positive, got {self.size}")
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(
    state: AdamState, grad: GradVector | np.ndarray, params: np.ndarray
) -> np.ndarray:
    """
    One Adam update; mutates the moments and step counter in `state`.

    Args:
        state: optimizer state
        grad: gradient, any shape with state.size entries
        params: current parameters, same size

    Returns:
        new raw (unprojected) parameters with the shape of `params`

    Raises:
        LengthMismatch: sizes of state, gradient and parameters disagree
    """
    g = grad.flat() if isinstance(grad, GradVector) else np.asarray(grad, dtype=np.float64).reshape(-1)
    x = np.asarray(params, dtype=np.float64)
    if g.size != state.size or x.size != state.size:
        raise LengthMismatch(
            f"Adam state has {state.size} entries, gradient {g.size}, params {x.size}"
        )

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step

    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)

    denom = np.sqrt(state.v / bc2) + state.eps
    update = (state.lr / bc1) * state.m / denom
    return (x.reshape(-1) - update).reshape(x.shape)

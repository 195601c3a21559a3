from typing import Dict, Optional

import numpy as np
import structlog

from ..exceptions import NonFiniteError
from .param_store import ParamStore

logger = structlog.get_logger(__name__)


def sgd_momentum_step(
    params: ParamStore,
    lr: float,
    momentum: float,
    clip_norm: Optional[float],
    velocity: Dict[str, np.ndarray],
) -> float:
    """
    One SGD-with-momentum update from the accumulated gradients.

    If the global gradient L2 norm exceeds `clip_norm` every gradient is
    scaled by clip_norm / norm; then v <- momentum * v - lr * g and
    theta <- theta + v. Gradients are zeroed afterwards.

    Args:
        params (ParamStore): Parameters with populated gradients
        lr (float): Learning rate
        momentum (float): Momentum coefficient
        clip_norm (float, optional): Global norm threshold; None or <= 0 disables clipping
        velocity (Dict[str, np.ndarray]): Velocity per parameter, created on first use

    Returns:
        Gradient norm before clipping

    Raises:
        NonFiniteError: If any gradient is non-finite; nothing is updated
    """
    norm = params.global_grad_norm()
    if not np.isfinite(norm):
        raise NonFiniteError("non-finite gradient, optimizer step aborted")

    scale = 1.0
    if clip_norm is not None and clip_norm > 0 and norm > clip_norm:
        scale = clip_norm / norm

    for name in params.names():
        grad = params.grad(name)
        value = params.value(name)
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(value)
            velocity[name] = v
        v *= momentum
        v -= lr * (scale * grad if scale != 1.0 else grad)
        value += v

    params.zero_grad()
    return norm


class MomentumOptimizer:
    """Keeps the velocity state of `sgd_momentum_step` between batches."""

    def __init__(self, lr: float = 0.002, momentum: float = 0.9, clip_norm: Optional[float] = 5.0):
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity: Dict[str, np.ndarray] = {}
        self.steps = 0

    def step(self, params: ParamStore) -> float:
        norm = sgd_momentum_step(params, self.lr, self.momentum, self.clip_norm, self.velocity)
        self.steps += 1
        return norm

    def state_tensors(self, params: ParamStore) -> Dict[str, np.ndarray]:
        """Velocity tensors in parameter declaration order (zeros before the first step)."""
        return {
            f"velocity/{name}": self.velocity.get(name, np.zeros_like(params.value(name)))
            for name in params.names()
        }

    def load_state_tensors(self, params: ParamStore, tensors: Dict[str, np.ndarray]) -> None:
        self.velocity = {}
        for name in params.names():
            key = f"velocity/{name}"
            if key in tensors:
                self.velocity[name] = np.array(tensors[key], dtype=np.float64, copy=True)

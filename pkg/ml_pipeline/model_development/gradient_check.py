from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..exceptions import NonFiniteError
from .layers import LayerSpec, backward, forward
from .param_store import ParamStore

logger = structlog.get_logger(__name__)

MIN_SAMPLED_SCALARS = 200
RELATIVE_FLOOR = 1e-8


@dataclass(frozen=True)
class GradientCheckResult:
    max_relative_error: float
    checked_scalars: int
    worst_parameter: str
    worst_index: int


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error over every element and its gradient w.r.t. the prediction."""
    residual = prediction - target
    loss = float(np.mean(residual * residual))
    return loss, 2.0 * residual / residual.size


def _loss_at(layers: Sequence[LayerSpec], params: ParamStore, inputs: np.ndarray, target: np.ndarray) -> float:
    prediction, _ = forward(layers, params, inputs)
    loss, _ = mse_loss(prediction, target)
    if not np.isfinite(loss):
        raise NonFiniteError("gradient check produced a non-finite loss")
    return loss


def _select_scalars(params: ParamStore, sample_size: Optional[int],
                    rng: np.random.Generator) -> List[Tuple[str, int]]:
    everything = [(name, index) for name, value in params.items() for index in range(value.size)]
    if sample_size is None or sample_size >= len(everything):
        return everything
    count = min(len(everything), max(MIN_SAMPLED_SCALARS, sample_size))
    chosen = np.sort(rng.choice(len(everything), size=count, replace=False))
    return [everything[i] for i in chosen]


def gradient_check(
    layers: Sequence[LayerSpec],
    params: ParamStore,
    inputs: np.ndarray,
    target: Optional[np.ndarray] = None,
    epsilon: float = 1e-5,
    sample_size: Optional[int] = None,
    seed: int = 0,
) -> GradientCheckResult:
    """
    Compare backpropagated gradients with central finite differences.

    The loss is the MSE between the stack's output and `target` (a standard
    normal target drawn from `seed` when omitted). Each checked scalar theta
    gets numeric gradient (L(theta + eps) - L(theta - eps)) / (2 eps) and
    relative error |a - n| / max(1e-8, |a| + |n|).

    Args:
        layers (Sequence[LayerSpec]): Layer stack under test
        params (ParamStore): Its parameters; restored exactly afterwards
        inputs (np.ndarray): T x in_dim input
        target (np.ndarray, optional): T x out_dim regression target
        epsilon (float): Finite-difference step
        sample_size (int, optional): Check a random subset of this many
            scalars (at least 200) instead of every parameter scalar
        seed (int): Seed for the target and the subsample

    Returns:
        GradientCheckResult with the maximum relative error
    """
    rng = np.random.default_rng(seed)
    inputs = np.asarray(inputs, dtype=np.float64)
    prediction, tape = forward(layers, params, inputs)
    if target is None:
        target = rng.standard_normal(prediction.shape)
    loss, d_prediction = mse_loss(prediction, target)
    if not np.isfinite(loss):
        raise NonFiniteError("gradient check produced a non-finite loss")

    analytic = params.grad_shadow()
    backward(tape, d_prediction, grads=analytic)

    worst = (0.0, "", -1)
    scalars = _select_scalars(params, sample_size, rng)
    for name, index in scalars:
        flat = params.value(name).reshape(-1)
        original = flat[index]
        flat[index] = original + epsilon
        loss_plus = _loss_at(layers, params, inputs, target)
        flat[index] = original - epsilon
        loss_minus = _loss_at(layers, params, inputs, target)
        flat[index] = original

        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        exact = float(analytic.grad(name).reshape(-1)[index])
        relative = abs(exact - numeric) / max(RELATIVE_FLOOR, abs(exact) + abs(numeric))
        if relative > worst[0]:
            worst = (relative, name, index)

    result = GradientCheckResult(
        max_relative_error=worst[0],
        checked_scalars=len(scalars),
        worst_parameter=worst[1],
        worst_index=worst[2],
    )
    logger.debug(
        "gradient_check_done",
        checked=result.checked_scalars,
        max_relative_error=result.max_relative_error,
        worst=result.worst_parameter,
    )
    return result

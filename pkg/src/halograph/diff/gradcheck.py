from typing import Callable, Dict

import numpy as np

from .tape import Tape, Tensor, backward

LossBuilder = Callable[[Tape, Dict[str, Tensor]], Tensor]


def tape_gradients(build_loss: LossBuilder, params: Dict[str, np.ndarray], dtype=np.float64):
    """Records ``build_loss`` on a fresh tape and returns the loss value and parameter gradients."""
    tape = Tape(dtype)
    tensors = {name: tape.parameter(name, value) for name, value in params.items()}
    loss = build_loss(tape, tensors)
    return float(loss.value.item()), backward(tape, loss)


def numerical_gradients(build_loss: LossBuilder, params: Dict[str, np.ndarray], step: float = 1e-6):
    """Central finite differences of the loss with respect to every parameter entry (float64)."""
    params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    gradients = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            original = value[idx]
            value[idx] = original + step
            upper, _ = tape_gradients(build_loss, params)
            value[idx] = original - step
            lower, _ = tape_gradients(build_loss, params)
            value[idx] = original
            grad[idx] = (upper - lower) / (2.0 * step)
        gradients[name] = grad
    return gradients


def max_relative_error(analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray], floor: float = 1e-6):
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / scale, initial=0.0)))
    return worst

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..errors import NonFiniteError


@dataclass
class OptimizerConfig:
    """Adam with cosine annealing and global-norm gradient clipping.

    Args:
        lr_max: Learning rate at step 0.
        lr_min: Learning rate at ``total_steps``.
        total_steps: Length of the cosine schedule.
        clip_threshold: Maximum global L2 norm of the gradient. ``None`` disables clipping.
        beta1: First moment decay.
        beta2: Second moment decay.
        eps: Denominator offset.
    """

    lr_max: float = 1e-3
    lr_min: float = 1e-6
    total_steps: int = 1000
    clip_threshold: float = 32.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class OptimizerState:
    """Moments and step counter. Moment arrays have the shapes of their parameters."""

    config: OptimizerConfig
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: Dict[str, np.ndarray], config: OptimizerConfig) -> "OptimizerState":
        return cls(
            config=config,
            first_moment={name: np.zeros_like(value) for name, value in params.items()},
            second_moment={name: np.zeros_like(value) for name, value in params.items()},
        )


def cosine_lr(step: int, config: OptimizerConfig) -> float:
    """``lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi t / T))``."""
    progress = min(max(step, 0), config.total_steps) / config.total_steps
    return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + np.cos(np.pi * progress))


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    """L2 norm of all gradients concatenated, summed in dictionary order."""
    total = 0.0
    for grad in grads.values():
        total += float(np.sum(np.square(grad, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_by_global_norm(grads: Dict[str, np.ndarray], threshold: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Scales all gradients by ``threshold / norm`` when the global norm exceeds ``threshold``.

    Returns:
        Tuple: Clipped gradients and the norm before clipping.
    """
    norm = global_norm(grads)
    if threshold is None or norm <= threshold:
        return grads, norm
    factor = threshold / norm
    return {name: grad * factor for name, grad in grads.items()}, norm


def adam_step(
    params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: OptimizerState
) -> Dict[str, np.ndarray]:
    """Clips the gradients, applies one Adam update at the scheduled learning rate and advances the state.

    Args:
        params: Current parameters.
        grads: Gradients with the same names and shapes.
        state: Optimizer state, updated in place.

    Returns:
        Dict[str, np.ndarray]: Updated parameters (new arrays).
    """
    config = state.config
    if state.step >= config.total_steps:
        raise ValueError(f"Optimizer step {state.step} is past the schedule length {config.total_steps}")
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Non-finite gradient for parameter {name!r}")

    grads, _ = clip_by_global_norm(grads, config.clip_threshold)
    lr = cosine_lr(state.step, config)
    t = state.step + 1
    bias1 = 1.0 - config.beta1 ** t
    bias2 = 1.0 - config.beta2 ** t

    updated = {}
    for name, value in params.items():
        grad = grads[name]
        m = config.beta1 * state.first_moment[name] + (1.0 - config.beta1) * grad
        v = config.beta2 * state.second_moment[name] + (1.0 - config.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        updated[name] = (value - lr * (m / bias1) / (np.sqrt(v / bias2) + config.eps)).astype(value.dtype)

    state.step = t
    return updated

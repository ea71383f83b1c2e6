from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from loguru import logger

EPSILON_FLOOR = 1e-8


@dataclass(frozen=True)
class NormStats:
    """Per-variable z-score statistics (population convention).

    Attributes:
        mean: Mean per variable.
        std: Standard deviation per variable, at least ``EPSILON_FLOOR``.
        clamped: Indices of variables whose std was clamped.
    """

    mean: np.ndarray
    std: np.ndarray
    clamped: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "clamped": list(self.clamped)}

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            clamped=[int(i) for i in data.get("clamped", [])],
        )


def fit_norm(values: np.ndarray, names: Optional[List[str]] = None) -> NormStats:
    """Fits global mean and population standard deviation per column.

    Args:
        values: Training values, shape (N,) or (N, d). Rows are samples.
        names: Optional variable names, only used in warnings.

    Returns:
        NormStats: Fitted statistics. Constant variables get std ``EPSILON_FLOOR`` and a warning.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError(f"Fitting normalization needs at least 2 samples, got {values.shape[0]}")

    mean = values.mean(axis=0)
    std = values.std(axis=0)
    clamped_mask = np.atleast_1d(std < EPSILON_FLOOR)
    clamped = [int(i) for i in np.flatnonzero(clamped_mask)]
    if clamped:
        labels = [names[i] for i in clamped] if names else clamped
        logger.warning("Variables {} are constant; clamping std to {}", labels, EPSILON_FLOOR)
    std = np.maximum(std, EPSILON_FLOOR)
    return NormStats(mean=mean, std=std, clamped=clamped)


def apply_norm(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Maps values to ``(x - mean) / std``."""
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def invert_norm(normalized: np.ndarray, stats: NormStats) -> np.ndarray:
    """Maps normalized values back to physical units."""
    return np.asarray(normalized, dtype=np.float64) * stats.std + stats.mean

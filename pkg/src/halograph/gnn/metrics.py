from typing import Dict, Sequence

import numpy as np

from .model import OUTPUT_NAMES


def relative_l2_error(prediction: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Relative L2 error ``||pred - ref|| / ||ref||`` per output column."""
    prediction = np.atleast_2d(np.asarray(prediction, dtype=np.float64).T).T
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64).T).T
    if prediction.shape != reference.shape:
        raise ValueError(f"Prediction shape {prediction.shape} does not match reference shape {reference.shape}")
    norm = np.linalg.norm(reference, axis=0)
    return np.linalg.norm(prediction - reference, axis=0) / np.maximum(norm, np.finfo(np.float64).tiny)


def relative_errors_by_name(
    prediction: np.ndarray, reference: np.ndarray, names: Sequence[str] = OUTPUT_NAMES
) -> Dict[str, float]:
    errors = relative_l2_error(prediction, reference)
    return {name: float(error) for name, error in zip(names, errors)}


def r2_score(predicted: np.ndarray, reference: np.ndarray) -> float:
    """Coefficient of determination of ``predicted`` against ``reference`` (e.g. forces over a set of shapes).

    A constant reference gives 1.0 for a perfect fit and ``-inf`` otherwise.
    """
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if predicted.shape != reference.shape:
        raise ValueError(f"Got {predicted.size} predictions for {reference.size} reference values")
    if reference.size < 2:
        raise ValueError("R² needs at least two values")
    residual = float(np.sum((reference - predicted) ** 2))
    total = float(np.sum((reference - reference.mean()) ** 2))
    if total == 0.0:
        return 1.0 if residual == 0.0 else float("-inf")
    return 1.0 - residual / total

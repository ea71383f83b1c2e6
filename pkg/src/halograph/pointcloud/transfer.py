import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

COINCIDENCE_DISTANCE = 1e-12


def idw_transfer(
    src_positions: np.ndarray,
    src_values: np.ndarray,
    dst_positions: np.ndarray,
    k: int = 5,
    power: float = 1.0,
) -> np.ndarray:
    """Inverse distance weighted interpolation from source points onto destination points.

    Weights ``1 / d**power`` over the ``k`` nearest sources are normalized to sum to one. A destination
    closer than 1e-12 to a source takes that source's value exactly.

    Args:
        src_positions: Source points, shape (m, 3).
        src_values: Source values, shape (m,) or (m, c).
        dst_positions: Destination points, shape (n, 3).
        k: Number of neighbors.
        power: Distance exponent.

    Returns:
        np.ndarray: Interpolated values, shape (n,) or (n, c).
    """
    if k < 1:
        raise ValueError(f"k must be at least 1 but got {k}")
    src_positions = np.asarray(src_positions, dtype=np.float64)
    if not len(src_positions):
        raise ValueError("IDW transfer needs at least one source point")

    src_values = np.asarray(src_values, dtype=np.float64)
    squeeze = src_values.ndim == 1
    values = src_values.reshape(len(src_positions), -1)

    if k > len(src_positions):
        logger.warning("Capping IDW neighbors at {} source points (asked for {})", len(src_positions), k)
        k = len(src_positions)

    distance, index = cKDTree(src_positions).query(np.asarray(dst_positions, dtype=np.float64), k=k)
    distance = distance.reshape(len(dst_positions), k)
    index = index.reshape(len(dst_positions), k)

    coincident = distance[:, 0] < COINCIDENCE_DISTANCE
    with np.errstate(divide="ignore"):
        weights = np.where(coincident[:, None], 0.0, 1.0 / distance ** power)
    weights[coincident, 0] = 1.0
    weights /= weights.sum(axis=1, keepdims=True)

    result = np.einsum("nk,nkc->nc", weights, values[index])
    result[coincident] = values[index[coincident, 0]]
    return result[:, 0] if squeeze else result

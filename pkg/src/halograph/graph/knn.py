"""Neighbor search. Ties in distance are broken by the smaller node index so results are reproducible."""
from dataclasses import dataclass
from typing import Optional, Set, Tuple

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

# Relative slack under which two kd-tree distances are treated as a possible tie.
_TIE_SLACK = 1e-9


@dataclass(frozen=True)
class EdgeList:
    """Directed edges ``senders[e] -> receivers[e]``."""

    senders: np.ndarray
    receivers: np.ndarray

    def __len__(self) -> int:
        return len(self.senders)

    def as_set(self) -> Set[Tuple[int, int]]:
        return set(zip(self.senders.tolist(), self.receivers.tolist()))

    def sorted_unique(self, num_nodes: Optional[int] = None) -> "EdgeList":
        """Deduplicated edges sorted by receiver, then sender."""
        if not len(self):
            return self
        num_nodes = num_nodes or int(max(self.senders.max(), self.receivers.max())) + 1
        keys = np.unique(self.receivers.astype(np.int64) * num_nodes + self.senders)
        return EdgeList(senders=keys % num_nodes, receivers=keys // num_nodes)


def squared_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance with a fixed summation order, so every caller gets identical bits."""
    d = a - b
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def knn_edges(positions: np.ndarray, k: int) -> EdgeList:
    """Edges ``j -> i`` from the ``k`` nearest distinct neighbors ``j`` of every node ``i``.

    Uses a kd-tree for candidates and resolves distance ties at the k-th place exactly, preferring the
    smaller node index. ``k`` is capped at ``n - 1``.

    Args:
        positions: Node positions, shape (n, 3).
        k: Neighbors per node.

    Returns:
        EdgeList: ``n * min(k, n - 1)`` edges sorted by receiver, then sender.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    k = _check_k(n, k)

    query_k = min(n, k + 2)
    _, candidates = cKDTree(positions).query(positions, k=query_k)
    candidates = candidates.reshape(n, query_k)

    # Drop the node itself, or the farthest candidate when coincident duplicates pushed it out.
    rows = np.arange(n)
    is_self = candidates == rows[:, None]
    drop = np.where(is_self.any(axis=1), is_self.argmax(axis=1), query_k - 1)
    keep = np.ones_like(candidates, dtype=bool)
    keep[rows, drop] = False
    candidates = candidates[keep].reshape(n, query_k - 1)

    candidates, dist = _sort_candidates(positions, rows, candidates)
    neighbors = candidates[:, :k].copy()

    if candidates.shape[1] > k:
        ambiguous = np.flatnonzero(dist[:, k] <= dist[:, k - 1] * (1.0 + _TIE_SLACK))
        if len(ambiguous):
            tree = cKDTree(positions)
            for i in ambiguous:
                radius = np.sqrt(dist[i, k - 1]) * (1.0 + _TIE_SLACK) + np.finfo(np.float64).tiny
                ball = np.asarray(tree.query_ball_point(positions[i], radius), dtype=np.int64)
                ball = ball[ball != i]
                ball_sorted, _ = _sort_candidates(positions, np.array([i]), ball[None, :])
                neighbors[i] = ball_sorted[0, :k]

    return EdgeList(senders=neighbors.ravel(), receivers=np.repeat(rows, k)).sorted_unique(n)


def knn_edges_bruteforce(positions: np.ndarray, k: int, chunk_size: int = 512) -> EdgeList:
    """Exhaustive O(n^2) k-nearest-neighbor edges with the same tie rule as ``knn_edges``."""
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    k = _check_k(n, k)

    neighbors = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk_size):
        rows = np.arange(start, min(n, start + chunk_size))
        dist = squared_distance(positions[None, :, :], positions[rows, None, :])
        dist[np.arange(len(rows)), rows] = np.inf
        neighbors[rows] = np.argsort(dist, axis=1, kind="stable")[:, :k]

    return EdgeList(senders=neighbors.ravel(), receivers=np.repeat(np.arange(n), k)).sorted_unique(n)


def radius_edges(positions: np.ndarray, radius: float) -> EdgeList:
    """Edges in both directions between all pairs closer than ``radius``."""
    if radius <= 0:
        raise ValueError(f"Radius must be positive but got {radius}")
    positions = np.asarray(positions, dtype=np.float64)
    pairs = cKDTree(positions).query_pairs(radius, output_type="ndarray")
    edges = EdgeList(
        senders=np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64),
        receivers=np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64),
    )
    return edges.sorted_unique(len(positions))


def symmetrize(edges: EdgeList, num_nodes: Optional[int] = None) -> EdgeList:
    """Union of the edges and their reverses, deduplicated and sorted."""
    both = EdgeList(
        senders=np.concatenate([edges.senders, edges.receivers]),
        receivers=np.concatenate([edges.receivers, edges.senders]),
    )
    return both.sorted_unique(num_nodes)


def _check_k(n: int, k: int) -> int:
    if k < 1:
        raise ValueError(f"k must be at least 1 but got {k}")
    if n < 2:
        raise ValueError(f"k-NN needs at least 2 points but got {n}")
    if k > n - 1:
        logger.warning("Capping k={} at n-1={}", k, n - 1)
        k = n - 1
    return k


def _sort_candidates(positions: np.ndarray, rows: np.ndarray, candidates: np.ndarray):
    """Sorts candidate columns of every row by (squared distance, index)."""
    by_index = np.sort(candidates, axis=1)
    dist = squared_distance(positions[by_index], positions[rows][:, None, :])
    order = np.argsort(dist, axis=1, kind="stable")
    return np.take_along_axis(by_index, order, axis=1), np.take_along_axis(dist, order, axis=1)

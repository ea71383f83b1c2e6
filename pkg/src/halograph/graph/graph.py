from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from loguru import logger
from scipy.sparse import csr_matrix

from ..pointcloud import MultiScalePointCloud
from .knn import EdgeList, knn_edges, radius_edges, symmetrize

EDGE_FEATURE_WIDTH = 4


@dataclass(frozen=True)
class Graph:
    """Directed graph in CSR form with one row per receiver.

    Attributes:
        node_count: Number of nodes.
        offsets: CSR row pointer, shape (n + 1,). Incoming edges of node ``i`` are ``offsets[i]:offsets[i+1]``.
        sources: Sender of every edge, sorted and unique within each row, shape (E,).
        edge_features: ``(x_j - x_i, |x_j - x_i|)`` for edge ``j -> i``, shape (E, 4).
        positions: Node positions, shape (n, 3).
        edge_level: Coarsest level whose connectivity produced the edge, shape (E,).
        normals: Optional node normals, shape (n, 3).
        k: Neighbors per node used to build the graph (0 when not k-NN).
        level_counts: Point counts of the levels the graph was built from.
        symmetric: Whether every edge has its reverse.
    """

    node_count: int
    offsets: np.ndarray
    sources: np.ndarray
    edge_features: np.ndarray
    positions: np.ndarray
    edge_level: np.ndarray
    normals: Optional[np.ndarray] = None
    k: int = 0
    level_counts: Tuple[int, ...] = field(default_factory=tuple)
    symmetric: bool = True

    @classmethod
    def from_edges(cls, edges: EdgeList, positions: np.ndarray, edge_level: Optional[np.ndarray] = None, **kwargs):
        """Builds the CSR arrays and edge features from an edge list sorted by receiver, then sender."""
        positions = np.asarray(positions, dtype=np.float64)
        n = len(positions)
        if len(edges) and np.any(edges.senders == edges.receivers):
            raise ValueError("Graph edges must not contain self-loops")

        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(edges.receivers, minlength=n), out=offsets[1:])
        if edge_level is None:
            edge_level = np.zeros(len(edges), dtype=np.uint8)

        return cls(
            node_count=n,
            offsets=offsets,
            sources=np.asarray(edges.senders, dtype=np.int64),
            edge_features=edge_features(positions, edges.senders, edges.receivers),
            positions=positions,
            edge_level=np.asarray(edge_level, dtype=np.uint8),
            **kwargs,
        )

    @property
    def num_edges(self) -> int:
        return len(self.sources)

    @property
    def senders(self) -> np.ndarray:
        return self.sources

    @property
    def receivers(self) -> np.ndarray:
        return np.repeat(np.arange(self.node_count, dtype=np.int64), np.diff(self.offsets))

    @property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def edge_list(self) -> EdgeList:
        return EdgeList(senders=self.sources, receivers=self.receivers)

    def adjacency(self) -> csr_matrix:
        """Sparse matrix with ``A[i, j] = 1`` for every edge ``j -> i``."""
        data = np.ones(self.num_edges, dtype=np.int8)
        return csr_matrix((data, self.sources, self.offsets), shape=(self.node_count, self.node_count))


def edge_feature(pos_i: np.ndarray, pos_j: np.ndarray) -> np.ndarray:
    """Feature of the edge ``j -> i``: sender minus receiver position and its length."""
    rel = np.asarray(pos_j, dtype=np.float64) - np.asarray(pos_i, dtype=np.float64)
    return np.append(rel, np.linalg.norm(rel))


def edge_features(positions: np.ndarray, senders: np.ndarray, receivers: np.ndarray) -> np.ndarray:
    """Vectorized ``edge_feature`` for many edges, shape (E, 4)."""
    rel = positions[senders] - positions[receivers]
    return np.hstack([rel, np.linalg.norm(rel, axis=1, keepdims=True)])


def build_multiscale_graph(
    cloud: MultiScalePointCloud,
    k: int = 6,
    symmetric: bool = True,
    radius: Optional[float] = None,
) -> Graph:
    """Builds one graph over the finest level from the connectivity of every level.

    Each level connects its own points (global indices are preserved by prefix nesting). The per-level
    edge sets are unioned, and every edge remembers the coarsest level that produced it.

    Args:
        cloud: Nested point cloud.
        k: Neighbors per node and level.
        symmetric: Whether to add the reverse of every k-NN edge.
        radius: When set, connect all pairs closer than ``radius`` instead of using k-NN.

    Returns:
        Graph: Multi-scale graph with edge features from the finest positions.
    """
    n = cloud.num_points
    senders, receivers, levels = [], [], []
    for level in cloud.levels:
        if level.count < 2:
            logger.warning("Level {} has {} point(s) and contributes no edges", level.level_index, level.count)
            continue
        if radius is not None:
            edges = radius_edges(level.positions, radius)
        else:
            edges = knn_edges(level.positions, k)
            if symmetric:
                edges = symmetrize(edges, level.count)
        senders.append(edges.senders)
        receivers.append(edges.receivers)
        levels.append(np.full(len(edges), level.level_index, dtype=np.uint8))
        logger.info("Level {}: {} points, {} edges", level.level_index, level.count, len(edges))

    senders = np.concatenate(senders) if senders else np.zeros(0, dtype=np.int64)
    receivers = np.concatenate(receivers) if receivers else np.zeros(0, dtype=np.int64)
    keys, first = np.unique(receivers * n + senders, return_index=True)
    merged = EdgeList(senders=keys % n, receivers=keys // n)

    graph = Graph.from_edges(
        merged,
        cloud.positions,
        edge_level=(np.concatenate(levels) if levels else np.zeros(0, dtype=np.uint8))[first],
        normals=cloud.normals,
        k=0 if radius is not None else k,
        level_counts=tuple(cloud.counts),
        symmetric=symmetric or radius is not None,
    )
    logger.info("Built multi-scale graph with {} nodes and {} edges", graph.node_count, graph.num_edges)
    return graph

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from loguru import logger
from scipy.sparse import csr_matrix

from ..graph import Graph


@dataclass(frozen=True)
class Partition:
    """Self-contained piece of a graph: owned nodes, their L-hop halo and the induced local CSR.

    Local node ``l`` is global node ``local_nodes[l]``; local nodes are sorted by global id, so owned rows
    taken in local order are already in global-id order.

    Attributes:
        part_id: Partition id.
        local_nodes: Local to global node map, sorted, shape (n_local,).
        owned_mask: Whether each local node is owned, shape (n_local,).
        offsets: Local CSR row pointer over receivers, shape (n_local + 1,).
        sources: Local sender id of every local edge.
        edge_ids: Global edge id of every local edge.
        halo_depth: Number of hops the halo was expanded by.
    """

    part_id: int
    local_nodes: np.ndarray
    owned_mask: np.ndarray
    offsets: np.ndarray
    sources: np.ndarray
    edge_ids: np.ndarray
    halo_depth: int

    @property
    def owned(self) -> np.ndarray:
        return self.local_nodes[self.owned_mask]

    @property
    def halo(self) -> np.ndarray:
        return self.local_nodes[~self.owned_mask]

    @property
    def num_local_nodes(self) -> int:
        return len(self.local_nodes)

    @property
    def num_local_edges(self) -> int:
        return len(self.sources)

    def subgraph(self, graph: Graph) -> Graph:
        """Local graph with edge features copied from the parent graph."""
        return Graph(
            node_count=self.num_local_nodes,
            offsets=self.offsets,
            sources=self.sources,
            edge_features=graph.edge_features[self.edge_ids],
            positions=graph.positions[self.local_nodes],
            edge_level=graph.edge_level[self.edge_ids],
            normals=None if graph.normals is None else graph.normals[self.local_nodes],
            k=graph.k,
            level_counts=graph.level_counts,
            symmetric=graph.symmetric,
        )


@dataclass(frozen=True)
class PartitionSet:
    """All partitions of one graph for one owner assignment and halo depth."""

    owner: np.ndarray
    partitions: List[Partition]
    halo_depth: int
    method: str = "unknown"
    directed: bool = False
    graph_checksum: Optional[str] = None

    @property
    def num_partitions(self) -> int:
        return len(self.partitions)

    def __len__(self) -> int:
        return len(self.partitions)

    def __iter__(self):
        return iter(self.partitions)

    def __getitem__(self, idx: int) -> Partition:
        return self.partitions[idx]


@dataclass(frozen=True)
class BalanceReport:
    """Size statistics of a partition set."""

    owned_counts: np.ndarray
    local_node_counts: np.ndarray
    local_edge_counts: np.ndarray
    replication_factor: float
    owned_ratio: float
    edge_ratio: float

    def to_dict(self) -> dict:
        return {
            "owned_counts": self.owned_counts.tolist(),
            "local_node_counts": self.local_node_counts.tolist(),
            "local_edge_counts": self.local_edge_counts.tolist(),
            "replication_factor": self.replication_factor,
            "owned_ratio": self.owned_ratio,
            "edge_ratio": self.edge_ratio,
        }


def hop_operator(graph: Graph, directed: bool = False) -> csr_matrix:
    """Matrix whose product with a node indicator marks the nodes one hop further.

    Undirected hops use both edge directions. Directed hops follow edges backwards, from receiver to sender.
    """
    adjacency = graph.adjacency()
    if directed:
        return adjacency.T.tocsr()
    return (adjacency + adjacency.T).tocsr()


def expand_halo(
    graph: Graph,
    owner: np.ndarray,
    halo_depth: int,
    num_partitions: Optional[int] = None,
    directed: Optional[bool] = None,
    method: str = "unknown",
    workers: int = 1,
    graph_checksum: Optional[str] = None,
) -> PartitionSet:
    """Builds every partition from its owned nodes and all nodes within ``halo_depth`` hops.

    The local CSR keeps every edge whose receiver and sender are both local. Edges from outside the local
    set are dropped; they cannot reach an owned node within ``halo_depth`` message passing steps.

    Args:
        graph: Full graph.
        owner: Partition id per node.
        halo_depth: Halo depth L in hops.
        num_partitions: Partition count P. Partitions owning no node are kept empty. Defaults to
            ``owner.max() + 1``.
        directed: Whether hops follow edge direction. Defaults to ``not graph.symmetric``.
        method: Name of the partitioner, stored with the set.
        workers: Number of threads building partitions.
        graph_checksum: Checksum of the parent graph bundle, stored with the set.

    Returns:
        PartitionSet: Partitions in id order.
    """
    if halo_depth < 0:
        raise ValueError(f"Halo depth must be non-negative but got {halo_depth}")
    owner = np.asarray(owner, dtype=np.int64)
    if len(owner) != graph.node_count:
        raise ValueError(f"Owner array has {len(owner)} entries but the graph has {graph.node_count} nodes")
    if directed is None:
        directed = not graph.symmetric

    hops = hop_operator(graph, directed)
    if num_partitions is None:
        num_partitions = int(owner.max()) + 1 if len(owner) else 0
    if len(owner) and (owner.min() < 0 or owner.max() >= num_partitions):
        raise ValueError(f"Owner ids must lie in [0, {num_partitions}) but span [{owner.min()}, {owner.max()}]")

    def build(part_id: int) -> Partition:
        return _build_partition(graph, hops, owner, part_id, halo_depth)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        partitions = list(pool.map(build, range(num_partitions)))

    logger.info("Expanded halos of depth {} for {} partitions", halo_depth, num_partitions)
    return PartitionSet(
        owner=owner,
        partitions=partitions,
        halo_depth=halo_depth,
        method=method,
        directed=directed,
        graph_checksum=graph_checksum,
    )


def _build_partition(graph: Graph, hops: csr_matrix, owner: np.ndarray, part_id: int, halo_depth: int) -> Partition:
    reached = owner == part_id
    frontier = reached
    for _ in range(halo_depth):
        frontier = (hops @ frontier.astype(np.int32) > 0) & ~reached
        if not frontier.any():
            break
        reached = reached | frontier

    local_nodes = np.flatnonzero(reached)
    global_to_local = np.full(graph.node_count, -1, dtype=np.int64)
    global_to_local[local_nodes] = np.arange(len(local_nodes))

    starts = graph.offsets[local_nodes]
    degrees = graph.offsets[local_nodes + 1] - starts
    row_start = np.repeat(np.cumsum(degrees) - degrees, degrees)
    edge_ids = np.repeat(starts, degrees) + np.arange(degrees.sum()) - row_start

    local_sources = global_to_local[graph.sources[edge_ids]]
    keep = local_sources >= 0
    rows = np.repeat(np.arange(len(local_nodes)), degrees)
    counts = np.bincount(rows[keep], minlength=len(local_nodes))

    offsets = np.zeros(len(local_nodes) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return Partition(
        part_id=part_id,
        local_nodes=local_nodes,
        owned_mask=owner[local_nodes] == part_id,
        offsets=offsets,
        sources=local_sources[keep],
        edge_ids=edge_ids[keep],
        halo_depth=halo_depth,
    )


def balance_report(partition_set: PartitionSet) -> BalanceReport:
    """Owned, local node and local edge counts per partition plus the replication factor."""
    owned = np.array([len(p.owned) for p in partition_set], dtype=np.int64)
    local_nodes = np.array([p.num_local_nodes for p in partition_set], dtype=np.int64)
    local_edges = np.array([p.num_local_edges for p in partition_set], dtype=np.int64)
    total = int(owned.sum())

    report = BalanceReport(
        owned_counts=owned,
        local_node_counts=local_nodes,
        local_edge_counts=local_edges,
        replication_factor=float(local_nodes.sum() / total) if total else 1.0,
        owned_ratio=_ratio(owned),
        edge_ratio=_ratio(local_edges),
    )
    logger.info(
        "Replication factor {:.4f}, owned max/min {:.3f}, local edges max/min {:.3f}",
        report.replication_factor,
        report.owned_ratio,
        report.edge_ratio,
    )
    return report


def check_halo_sufficiency(graph: Graph, partition_set: PartitionSet, probes: int = 32, seed: int = 0) -> List[int]:
    """Probes random owned nodes and checks that their full L-hop neighborhood is local.

    Returns:
        List[int]: Global ids of probed nodes whose neighborhood leaves their partition. Empty when the
        halos are sufficient.
    """
    rng = np.random.default_rng(seed)
    hops = hop_operator(graph, partition_set.directed)
    violations = []
    for node in rng.choice(graph.node_count, size=min(probes, graph.node_count), replace=False):
        partition = partition_set[int(partition_set.owner[node])]
        local = np.zeros(graph.node_count, dtype=bool)
        local[partition.local_nodes] = True
        reached = np.zeros(graph.node_count, dtype=bool)
        reached[node] = True
        for _ in range(partition_set.halo_depth):
            reached |= hops @ reached.astype(np.int32) > 0
        if np.any(reached & ~local):
            violations.append(int(node))
    if violations:
        logger.warning("Halo probes found {} nodes with non-local neighborhoods", len(violations))
    return violations


def _ratio(values: np.ndarray) -> float:
    if not len(values):
        return 1.0
    low = values.min()
    return float(values.max() / low) if low > 0 else float("inf")

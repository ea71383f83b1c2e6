"""Node-to-partition assignment.

METIS is not bundled; its output (or any other partitioner's) can be imported as an owner file, a raw
little-endian i32 array with one partition id per node.
"""
import heapq
from collections import deque
from pathlib import Path
from typing import Optional, Union

import numpy as np
from loguru import logger

from ..graph import Graph

METHODS = ("coordinate_bisection", "greedy_bfs", "external_assignment")


def partition_nodes(
    graph: Graph,
    num_partitions: int,
    method: str = "coordinate_bisection",
    owner_file: Optional[Union[str, Path]] = None,
    balance_edges: bool = False,
) -> np.ndarray:
    """Assigns every node to exactly one partition.

    Args:
        graph: Graph to partition.
        num_partitions: Number of partitions P, ``1 <= P <= n``.
        method: One of "coordinate_bisection", "greedy_bfs" or "external_assignment".
        owner_file: Owner file for "external_assignment".
        balance_edges: For "greedy_bfs", balance incoming edge counts instead of node counts.

    Returns:
        np.ndarray: Owner partition id per node, int64.
    """
    if method not in METHODS:
        raise ValueError(f"Partition method must be one of {METHODS} but got {method!r}")
    if not 1 <= num_partitions <= graph.node_count:
        raise ValueError(f"Partition count must lie in [1, {graph.node_count}] but got {num_partitions}")

    if method == "coordinate_bisection":
        owner = coordinate_bisection(graph.positions, num_partitions)
    elif method == "greedy_bfs":
        owner = greedy_bfs(graph, num_partitions, balance_edges=balance_edges)
    else:
        if owner_file is None:
            raise ValueError("Method 'external_assignment' needs an owner file")
        owner = read_owner_file(owner_file, graph.node_count, num_partitions)

    counts = np.bincount(owner, minlength=num_partitions)
    if np.any(counts == 0):
        logger.warning("Partitions {} own no nodes", np.flatnonzero(counts == 0).tolist())
    logger.info("Partitioned {} nodes into {} parts with {}", graph.node_count, num_partitions, method)
    return owner


def coordinate_bisection(positions: np.ndarray, num_partitions: int) -> np.ndarray:
    """Recursive median splits along the widest axis.

    Part sizes are fixed up front to ``n // P`` or ``n // P + 1``, so owned counts differ by at most one.
    Ties along the split axis go to the smaller node index.
    """
    n = len(positions)
    sizes = np.full(num_partitions, n // num_partitions, dtype=np.int64)
    sizes[: n % num_partitions] += 1
    owner = np.empty(n, dtype=np.int64)

    stack = [(np.arange(n, dtype=np.int64), 0, num_partitions)]
    while stack:
        nodes, lo, hi = stack.pop()
        if hi - lo == 1:
            owner[nodes] = lo
            continue
        mid = (lo + hi) // 2
        points = positions[nodes]
        axis = int(np.argmax(points.max(axis=0) - points.min(axis=0)))
        order = np.lexsort((nodes, points[:, axis]))
        n_left = int(sizes[lo:mid].sum())
        stack.append((nodes[order[n_left:]], mid, hi))
        stack.append((nodes[order[:n_left]], lo, mid))
    return owner


def greedy_bfs(graph: Graph, num_partitions: int, balance_edges: bool = False) -> np.ndarray:
    """Grows regions breadth-first from spread-out seeds, always extending the least loaded region.

    Seeds are chosen by farthest-point sampling starting at node 0. Nodes unreachable from any region
    seed the least loaded region.
    """
    n = graph.node_count
    adjacency = (graph.adjacency() + graph.adjacency().T).tocsr()
    adjacency.sort_indices()
    indptr, indices = adjacency.indptr, adjacency.indices
    weight = graph.in_degree.astype(np.float64) if balance_edges else np.ones(n)

    seeds = _farthest_point_seeds(graph.positions, num_partitions)
    owner = np.full(n, -1, dtype=np.int64)
    owner[seeds] = np.arange(num_partitions)
    load = weight[seeds].copy()
    cursor = indptr[:-1].copy()
    frontiers = [deque([seed]) for seed in seeds]
    heap = [(load[p], p) for p in range(num_partitions)]
    heapq.heapify(heap)
    remaining = int(np.count_nonzero(owner < 0))
    next_unclaimed = 0

    while remaining:
        if not heap:
            while owner[next_unclaimed] >= 0:
                next_unclaimed += 1
            p = int(np.lexsort((np.arange(num_partitions), load))[0])
            owner[next_unclaimed] = p
            load[p] += weight[next_unclaimed]
            frontiers[p].append(next_unclaimed)
            heapq.heappush(heap, (load[p], p))
            remaining -= 1
            continue

        _, p = heapq.heappop(heap)
        claimed = None
        frontier = frontiers[p]
        while frontier and claimed is None:
            u = frontier[0]
            while cursor[u] < indptr[u + 1] and owner[indices[cursor[u]]] >= 0:
                cursor[u] += 1
            if cursor[u] == indptr[u + 1]:
                frontier.popleft()
            else:
                claimed = int(indices[cursor[u]])

        if claimed is None:
            continue
        owner[claimed] = p
        load[p] += weight[claimed]
        frontier.append(claimed)
        heapq.heappush(heap, (load[p], p))
        remaining -= 1

    return owner


def read_owner_file(path: Union[str, Path], num_nodes: int, num_partitions: int) -> np.ndarray:
    """Reads an owner assignment stored as raw little-endian i32."""
    owner = np.fromfile(path, dtype="<i4").astype(np.int64)
    if len(owner) != num_nodes:
        raise ValueError(f"Owner file {path} assigns {len(owner)} nodes but the graph has {num_nodes}")
    unassigned = np.flatnonzero(owner < 0)
    if len(unassigned):
        raise ValueError(f"Owner file {path} leaves {len(unassigned)} nodes unassigned, first {unassigned[0]}")
    if owner.max(initial=0) >= num_partitions:
        raise ValueError(f"Owner file {path} uses partition id {owner.max()} but only {num_partitions} exist")
    return owner


def write_owner_file(path: Union[str, Path], owner: np.ndarray) -> None:
    """Writes an owner assignment as raw little-endian i32."""
    np.asarray(owner).astype("<i4").tofile(path)


def _farthest_point_seeds(positions: np.ndarray, count: int) -> np.ndarray:
    seeds = [0]
    nearest = np.linalg.norm(positions - positions[0], axis=1)
    for _ in range(count - 1):
        seed = int(np.argmax(nearest))
        if nearest[seed] == 0:
            # Remaining points coincide with seeds; take the first unused index instead.
            seed = int(np.setdiff1d(np.arange(len(positions)), seeds)[0])
        seeds.append(seed)
        nearest = np.minimum(nearest, np.linalg.norm(positions - positions[seed], axis=1))
    return np.asarray(seeds, dtype=np.int64)

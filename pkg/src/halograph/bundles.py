"""On-disk bundles.

A bundle is a directory with ``manifest.json`` and one raw little-endian ``<name>.bin`` file per array. The
manifest records dtype, shape and SHA-256 digest of every array; the bundle checksum is the SHA-256 over
the named array digests and the canonical metadata. A downstream bundle stores the checksum of the bundle
it was derived from, so a stale upstream is detected when both are loaded together.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from datasets import Dataset
from loguru import logger

from .errors import ChecksumError, SchemaError
from .geometry import ScalarGrid
from .graph import Graph
from .partition import BalanceReport, Partition, PartitionSet
from .pointcloud import FeatureSchema, MultiScalePointCloud
from .stencil import Conv, StencilStack
from .utils import array_digest, canonical_json, combine_digests

BUNDLE_VERSION = 1
MANIFEST_NAME = "manifest.json"
KINDS = ("pointcloud", "graph", "partition", "checkpoint", "prediction", "grid", "stencil")

PathLike = Union[str, Path]


@dataclass
class Bundle:
    """Arrays and metadata of one bundle directory."""

    kind: str
    arrays: Dict[str, np.ndarray]
    metadata: dict
    checksum: str
    upstream_checksum: Optional[str] = None
    path: Optional[Path] = None
    entries: Dict[str, dict] = field(default_factory=dict)


def write_bundle(
    path: PathLike,
    kind: str,
    arrays: Dict[str, np.ndarray],
    metadata: Optional[dict] = None,
    upstream_checksum: Optional[str] = None,
) -> str:
    """Writes arrays and metadata to ``path`` and returns the bundle checksum."""
    if kind not in KINDS:
        raise ValueError(f"Unknown bundle kind {kind!r}, expected one of {KINDS}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    # Hash the metadata exactly as it reads back from JSON.
    metadata = json.loads(canonical_json(metadata or {}))

    entries = {}
    for name, array in arrays.items():
        array = np.ascontiguousarray(array)
        little = array.astype(array.dtype.newbyteorder("<"), copy=False)
        (path / f"{name}.bin").write_bytes(little.tobytes())
        entries[name] = {"dtype": little.dtype.str, "shape": list(array.shape), "sha256": array_digest(array)}

    checksum = combine_digests({name: entry["sha256"] for name, entry in entries.items()}, metadata)
    manifest = {
        "bundle_version": BUNDLE_VERSION,
        "kind": kind,
        "checksum": checksum,
        "upstream_checksum": upstream_checksum,
        "arrays": entries,
        "metadata": metadata,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Wrote {} bundle with {} arrays to {}", kind, len(entries), path)
    return checksum


def read_manifest(path: PathLike) -> dict:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"No bundle manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("bundle_version") != BUNDLE_VERSION:
        raise SchemaError(
            f"Bundle at {path} has version {manifest.get('bundle_version')}, expected {BUNDLE_VERSION}"
        )
    return manifest


def read_bundle(path: PathLike, kind: Optional[str] = None, upstream: Optional[PathLike] = None) -> Bundle:
    """Loads a bundle and verifies every array digest and the bundle checksum.

    Args:
        path: Bundle directory.
        kind: Expected bundle kind.
        upstream: Bundle this one was derived from. Its checksum is recomputed and compared with the stored
            ``upstream_checksum``.

    Returns:
        Bundle: The loaded bundle.
    """
    path = Path(path)
    manifest = read_manifest(path)
    if kind is not None and manifest["kind"] != kind:
        raise SchemaError(f"Bundle at {path} is a {manifest['kind']} bundle, expected {kind}")

    arrays = {}
    for name, entry in manifest["arrays"].items():
        array = _read_array(path, name, entry)
        if array_digest(array) != entry["sha256"]:
            raise ChecksumError(f"Array {name!r} of bundle {path} does not match its recorded digest")
        arrays[name] = array

    checksum = _manifest_checksum(manifest)
    if checksum != manifest["checksum"]:
        raise ChecksumError(f"Manifest of bundle {path} was modified after writing; rewrite the bundle")

    bundle = Bundle(
        kind=manifest["kind"],
        arrays=arrays,
        metadata=manifest["metadata"],
        checksum=checksum,
        upstream_checksum=manifest.get("upstream_checksum"),
        path=path,
        entries=manifest["arrays"],
    )
    if upstream is not None:
        check_upstream(bundle, upstream)
    return bundle


def bundle_checksum(path: PathLike) -> str:
    """Checksum of a bundle recomputed from its array files and manifest metadata."""
    path = Path(path)
    manifest = read_manifest(path)
    digests = {name: array_digest(_read_array(path, name, entry)) for name, entry in manifest["arrays"].items()}
    return combine_digests(digests, manifest["metadata"])


def check_upstream(bundle: Bundle, upstream: PathLike) -> None:
    """Raises ``ChecksumError`` if ``upstream`` changed since ``bundle`` was derived from it."""
    actual = bundle_checksum(upstream)
    if bundle.upstream_checksum != actual:
        raise ChecksumError(
            f"{bundle.kind} bundle {bundle.path} was built from an upstream with checksum "
            f"{bundle.upstream_checksum}, but {upstream} now has checksum {actual}. Rebuild {bundle.path}."
        )


def check_source(bundle: Bundle, source: str, digest: str) -> None:
    """Raises ``ChecksumError`` if the geometry ``source`` no longer has the digest ``bundle`` was sampled from."""
    if bundle.upstream_checksum != digest:
        raise ChecksumError(
            f"{bundle.kind} bundle {bundle.path} was sampled from a geometry with digest "
            f"{bundle.upstream_checksum}, but {source} now has digest {digest}. Rebuild {bundle.path}."
        )


def _read_array(path: Path, name: str, entry: dict) -> np.ndarray:
    raw = (path / f"{name}.bin").read_bytes()
    return np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()


def _manifest_checksum(manifest: dict) -> str:
    digests = {name: entry["sha256"] for name, entry in manifest["arrays"].items()}
    return combine_digests(digests, manifest["metadata"])


def save_pointcloud(
    path: PathLike,
    cloud: MultiScalePointCloud,
    total_area: float,
    geometry_digest: str,
    targets: Optional[np.ndarray] = None,
    metadata: Optional[dict] = None,
) -> str:
    """Stores a point cloud. The geometry digest doubles as its upstream checksum."""
    arrays = {"positions": cloud.positions, "normals": cloud.normals, "triangle_ids": cloud.triangle_ids}
    if targets is not None:
        arrays["targets"] = targets
    meta = {"counts": list(cloud.counts), "total_area": float(total_area), "geometry_digest": geometry_digest}
    meta.update(metadata or {})
    return write_bundle(path, "pointcloud", arrays, meta, upstream_checksum=geometry_digest)


def load_pointcloud(path: PathLike) -> Tuple[MultiScalePointCloud, Optional[np.ndarray], Bundle]:
    bundle = read_bundle(path, "pointcloud")
    cloud = MultiScalePointCloud(
        counts=tuple(bundle.metadata["counts"]),
        positions=bundle.arrays["positions"],
        normals=bundle.arrays["normals"],
        triangle_ids=bundle.arrays["triangle_ids"],
    )
    return cloud, bundle.arrays.get("targets"), bundle


def save_graph(
    path: PathLike,
    graph: Graph,
    upstream_checksum: Optional[str] = None,
    feature_schema: Optional[FeatureSchema] = None,
) -> str:
    """Stores a graph: ``f4`` positions, normals and edge features, ``i8`` CSR arrays, ``u1`` edge levels.

    The node feature schema goes into the manifest so later stages can check input compatibility.
    """
    arrays = {
        "positions": np.asarray(graph.positions, dtype=np.float32),
        "csr_offsets": np.asarray(graph.offsets, dtype=np.int64),
        "csr_sources": np.asarray(graph.sources, dtype=np.int64),
        "edge_features": np.asarray(graph.edge_features, dtype=np.float32),
        "edge_level": np.asarray(graph.edge_level, dtype=np.uint8),
    }
    if graph.normals is not None:
        arrays["normals"] = np.asarray(graph.normals, dtype=np.float32)
    metadata = {
        "node_count": graph.node_count,
        "num_edges": graph.num_edges,
        "k": graph.k,
        "level_counts": list(graph.level_counts),
        "symmetric": graph.symmetric,
        "feature_schema": feature_schema.to_list() if feature_schema is not None else None,
    }
    return write_bundle(path, "graph", arrays, metadata, upstream_checksum)


def load_graph(path: PathLike, upstream: Optional[PathLike] = None) -> Tuple[Graph, Bundle]:
    bundle = read_bundle(path, "graph", upstream)
    arrays, meta = bundle.arrays, bundle.metadata
    normals = arrays.get("normals")
    graph = Graph(
        node_count=int(meta["node_count"]),
        offsets=arrays["csr_offsets"],
        sources=arrays["csr_sources"],
        edge_features=arrays["edge_features"].astype(np.float64),
        positions=arrays["positions"].astype(np.float64),
        edge_level=arrays["edge_level"],
        normals=None if normals is None else normals.astype(np.float64),
        k=int(meta["k"]),
        level_counts=tuple(meta["level_counts"]),
        symmetric=bool(meta["symmetric"]),
    )
    return graph, bundle


def graph_feature_schema(bundle: Bundle) -> Optional[FeatureSchema]:
    """Node feature schema recorded in a graph bundle, ``None`` when the graph was saved without one."""
    blocks = bundle.metadata.get("feature_schema")
    return None if blocks is None else FeatureSchema.from_list(blocks)


PARTITION_ARRAYS = ("owned", "halo", "owned_mask", "csr_offsets", "csr_sources", "edge_ids")


def save_partition(
    path: PathLike, partition_set: PartitionSet, report: Optional[BalanceReport] = None
) -> str:
    """Stores the owner array and, per partition, ``i8`` owned and halo ids, the ``u1`` owned mask over the
    sorted local nodes, the local CSR and the global edge ids."""
    arrays = {"owner": np.asarray(partition_set.owner, dtype=np.int64)}
    for partition in partition_set:
        prefix = f"part{partition.part_id}."
        arrays[prefix + "owned"] = np.asarray(partition.owned, dtype=np.int64)
        arrays[prefix + "halo"] = np.asarray(partition.halo, dtype=np.int64)
        arrays[prefix + "owned_mask"] = partition.owned_mask.astype(np.uint8)
        arrays[prefix + "csr_offsets"] = np.asarray(partition.offsets, dtype=np.int64)
        arrays[prefix + "csr_sources"] = np.asarray(partition.sources, dtype=np.int64)
        arrays[prefix + "edge_ids"] = np.asarray(partition.edge_ids, dtype=np.int64)
    metadata = {
        "num_partitions": partition_set.num_partitions,
        "halo_depth": partition_set.halo_depth,
        "method": partition_set.method,
        "directed": partition_set.directed,
        "graph_checksum": partition_set.graph_checksum,
        "balance": report.to_dict() if report is not None else None,
    }
    return write_bundle(path, "partition", arrays, metadata, partition_set.graph_checksum)


def load_partition(path: PathLike, upstream: Optional[PathLike] = None) -> Tuple[PartitionSet, Bundle]:
    bundle = read_bundle(path, "partition", upstream)
    meta = bundle.metadata
    halo_depth = int(meta["halo_depth"])
    partitions: List[Partition] = []
    for part_id in range(int(meta["num_partitions"])):
        part = {name: bundle.arrays[f"part{part_id}.{name}"] for name in PARTITION_ARRAYS}
        local_nodes = np.union1d(part["owned"], part["halo"])
        owned_mask = part["owned_mask"].astype(bool)
        if len(local_nodes) != len(owned_mask) or not np.array_equal(local_nodes[owned_mask], part["owned"]):
            raise SchemaError(f"Partition {part_id} of bundle {path} has an inconsistent owned mask")
        partitions.append(
            Partition(
                part_id=part_id,
                local_nodes=local_nodes,
                owned_mask=owned_mask,
                offsets=part["csr_offsets"],
                sources=part["csr_sources"],
                edge_ids=part["edge_ids"],
                halo_depth=halo_depth,
            )
        )
    partition_set = PartitionSet(
        owner=bundle.arrays["owner"],
        partitions=partitions,
        halo_depth=halo_depth,
        method=meta["method"],
        directed=bool(meta["directed"]),
        graph_checksum=bundle.upstream_checksum,
    )
    return partition_set, bundle


def save_prediction(
    path: PathLike,
    positions: np.ndarray,
    values: np.ndarray,
    names: Tuple[str, ...],
    metadata: Optional[dict] = None,
    upstream_checksum: Optional[str] = None,
    write_csv: bool = True,
) -> str:
    """Writes positions and one float32 array per predicted variable, plus an optional CSV table."""
    arrays = {"positions": np.asarray(positions, dtype=np.float32)}
    for column, name in enumerate(names):
        arrays[name] = np.asarray(values[:, column], dtype=np.float32)
    meta = {"variables": list(names)}
    meta.update(metadata or {})
    checksum = write_bundle(path, "prediction", arrays, meta, upstream_checksum)

    if write_csv:
        table = {
            "node_id": np.arange(len(positions)),
            "x": positions[:, 0],
            "y": positions[:, 1],
            "z": positions[:, 2],
        }
        table.update({name: values[:, column] for column, name in enumerate(names)})
        Dataset.from_dict(table).to_csv(str(Path(path) / "predictions.csv"))
    return checksum


def load_prediction(path: PathLike, upstream: Optional[PathLike] = None) -> Tuple[np.ndarray, np.ndarray, Bundle]:
    bundle = read_bundle(path, "prediction", upstream)
    names = bundle.metadata["variables"]
    values = np.stack([bundle.arrays[name] for name in names], axis=1)
    return bundle.arrays["positions"], values, bundle


def save_scalar_grid(path: PathLike, grid: ScalarGrid, name: str = "values") -> str:
    """Stores a grid as its manifest entry plus raw ``<f4`` values."""
    return write_bundle(path, "grid", {name: grid.values.astype(np.float32)}, {name: grid.manifest_entry()})


def load_scalar_grid(path: PathLike, name: str = "values") -> ScalarGrid:
    bundle = read_bundle(path, "grid")
    entry = bundle.metadata[name]
    return ScalarGrid(
        origin=np.asarray(entry["origin"], dtype=np.float64),
        spacing=np.asarray(entry["spacing"], dtype=np.float64),
        dims=tuple(entry["dims"]),
        values=bundle.arrays[name],
    )


def save_stencil(path: PathLike, stack: StencilStack) -> str:
    """Stores a stencil stack: layer descriptions in the manifest, conv weights as arrays."""
    arrays = {}
    layers = []
    for index, layer in enumerate(stack.layers):
        entry = layer.describe()
        if isinstance(layer, Conv):
            arrays[f"layer{index}.weights"] = np.asarray(layer.weights, dtype=np.float64)
            entry["bias"] = float(layer.bias)
        layers.append(entry)
    return write_bundle(path, "stencil", arrays, {"layers": layers})


def load_stencil(path: PathLike) -> StencilStack:
    bundle = read_bundle(path, "stencil")
    layers = []
    for index, entry in enumerate(bundle.metadata["layers"]):
        if entry["kind"] == "conv":
            layers.append(Conv(weights=bundle.arrays[f"layer{index}.weights"], bias=float(entry["bias"])))
        else:
            layers.extend(StencilStack.from_description([entry]).layers)
    return StencilStack(tuple(layers))

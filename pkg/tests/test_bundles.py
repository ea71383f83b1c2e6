import csv
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from halograph.bundles import (
    MANIFEST_NAME,
    bundle_checksum,
    check_source,
    graph_feature_schema,
    load_graph,
    load_partition,
    load_pointcloud,
    load_prediction,
    load_scalar_grid,
    load_stencil,
    read_bundle,
    save_graph,
    save_partition,
    save_pointcloud,
    save_prediction,
    save_scalar_grid,
    save_stencil,
    write_bundle,
)
from halograph.errors import ChecksumError, SchemaError
from halograph.geometry import ScalarGrid, icosphere
from halograph.graph import build_multiscale_graph
from halograph.partition import expand_halo, partition_nodes
from halograph.pointcloud import multiscale_sample, surface_schema
from halograph.stencil import StencilStack


class TestBundleFormat(unittest.TestCase):
    """Testcase for the manifest and raw array files"""

    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()
        self.path = Path(self.directory.name) / "bundle"

    def tearDown(self) -> None:
        self.directory.cleanup()

    def test_round_trip(self):
        arrays = {"a": np.arange(6, dtype=np.int32).reshape(2, 3), "b": np.linspace(0, 1, 5)}
        checksum = write_bundle(self.path, "grid", arrays, {"note": "x"}, upstream_checksum="up")
        bundle = read_bundle(self.path, "grid")
        self.assertEqual(bundle.checksum, checksum)
        self.assertEqual(bundle_checksum(self.path), checksum)
        self.assertEqual(bundle.upstream_checksum, "up")
        self.assertEqual(bundle.metadata, {"note": "x"})
        np.testing.assert_array_equal(bundle.arrays["a"], arrays["a"])
        self.assertEqual(bundle.arrays["a"].dtype, np.int32)

    def test_arrays_are_little_endian(self):
        write_bundle(self.path, "grid", {"a": np.array([1.0], dtype=">f8")})
        manifest = json.loads((self.path / MANIFEST_NAME).read_text())
        self.assertEqual(manifest["arrays"]["a"]["dtype"], "<f8")
        self.assertEqual((self.path / "a.bin").read_bytes(), np.array([1.0], dtype="<f8").tobytes())

    def test_corrupted_array(self):
        """A modified array file fails its digest"""
        write_bundle(self.path, "grid", {"a": np.zeros(4)})
        (self.path / "a.bin").write_bytes(np.ones(4).tobytes())
        with self.assertRaises(ChecksumError):
            read_bundle(self.path)

    def test_wrong_kind(self):
        write_bundle(self.path, "grid", {"a": np.zeros(4)})
        with self.assertRaises(SchemaError):
            read_bundle(self.path, "graph")
        with self.assertRaises(ValueError):
            write_bundle(self.path, "weights", {"a": np.zeros(4)})

    def test_missing_manifest(self):
        with self.assertRaises(FileNotFoundError):
            read_bundle(self.path)

    def test_checksum_covers_metadata_and_names(self):
        """Changing metadata or swapping array names changes the checksum"""
        arrays = {"a": np.zeros(4), "b": np.ones(4)}
        first = write_bundle(self.path, "grid", arrays, {"run": 1})
        self.assertEqual(write_bundle(self.path, "grid", arrays, {"run": 1}), first)
        self.assertNotEqual(write_bundle(self.path, "grid", arrays, {"run": 2}), first)
        swapped = {"a": np.ones(4), "b": np.zeros(4)}
        self.assertNotEqual(write_bundle(self.path, "grid", swapped, {"run": 1}), first)

    def test_edited_manifest_metadata(self):
        """Editing metadata in the manifest after writing is detected"""
        write_bundle(self.path, "grid", {"a": np.zeros(4)}, {"run": 1})
        manifest = json.loads((self.path / MANIFEST_NAME).read_text())
        manifest["metadata"]["run"] = 2
        (self.path / MANIFEST_NAME).write_text(json.dumps(manifest))
        with self.assertRaises(ChecksumError):
            read_bundle(self.path)


class TestPipelineBundles(unittest.TestCase):
    """Testcase for the typed bundles and stale upstream detection"""

    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        self.soup = icosphere(subdivisions=2)
        self.cloud = multiscale_sample(self.soup, (30, 120), seed=0)
        self.targets = np.random.default_rng(0).normal(size=(120, 4))

    def tearDown(self) -> None:
        self.directory.cleanup()

    def _save_chain(self):
        cloud_checksum = save_pointcloud(self.root / "pointcloud", self.cloud, self.soup.total_area, "digest",
                                         self.targets)
        graph = build_multiscale_graph(self.cloud, k=6)
        graph_checksum = save_graph(
            self.root / "graph", graph, upstream_checksum=cloud_checksum, feature_schema=surface_schema()
        )
        partition_set = expand_halo(graph, partition_nodes(graph, 3), 2, graph_checksum=graph_checksum)
        save_partition(self.root / "partition", partition_set)
        return graph, partition_set

    def test_pointcloud_round_trip(self):
        self._save_chain()
        cloud, targets, bundle = load_pointcloud(self.root / "pointcloud")
        self.assertEqual(cloud.counts, (30, 120))
        np.testing.assert_array_equal(cloud.positions, self.cloud.positions)
        np.testing.assert_array_equal(targets, self.targets)
        self.assertAlmostEqual(bundle.metadata["total_area"], self.soup.total_area)

    def test_graph_and_partition_round_trip(self):
        graph, partition_set = self._save_chain()
        loaded_graph, graph_bundle = load_graph(self.root / "graph", upstream=self.root / "pointcloud")
        np.testing.assert_array_equal(loaded_graph.offsets, graph.offsets)
        np.testing.assert_array_equal(loaded_graph.sources, graph.sources)
        np.testing.assert_array_equal(loaded_graph.edge_level, graph.edge_level)
        np.testing.assert_allclose(loaded_graph.edge_features, graph.edge_features, rtol=1e-6, atol=1e-7)
        self.assertEqual(graph_feature_schema(graph_bundle), surface_schema())

        loaded_set, _ = load_partition(self.root / "partition", upstream=self.root / "graph")
        self.assertEqual(loaded_set.num_partitions, 3)
        self.assertEqual(loaded_set.halo_depth, 2)
        for before, after in zip(partition_set, loaded_set):
            np.testing.assert_array_equal(before.local_nodes, after.local_nodes)
            np.testing.assert_array_equal(before.owned_mask, after.owned_mask)
            np.testing.assert_array_equal(before.edge_ids, after.edge_ids)

    def test_graph_and_partition_layout(self):
        """Array names and dtypes of graph and partition bundles"""
        self._save_chain()
        graph_entries = read_bundle(self.root / "graph").entries
        expected = {
            "positions": "<f4",
            "normals": "<f4",
            "csr_offsets": "<i8",
            "csr_sources": "<i8",
            "edge_features": "<f4",
            "edge_level": "|u1",
        }
        self.assertEqual({name: entry["dtype"] for name, entry in graph_entries.items()}, expected)
        self.assertEqual(graph_entries["edge_features"]["shape"][1], 4)

        partition = read_bundle(self.root / "partition")
        self.assertEqual(partition.metadata["num_partitions"], 3)
        self.assertEqual(partition.metadata["graph_checksum"], partition.upstream_checksum)
        for name, dtype in [("owned", "<i8"), ("halo", "<i8"), ("owned_mask", "|u1"), ("csr_offsets", "<i8"),
                            ("csr_sources", "<i8")]:
            self.assertEqual(partition.entries[f"part1.{name}"]["dtype"], dtype, name)
        owned, halo = partition.arrays["part1.owned"], partition.arrays["part1.halo"]
        self.assertEqual(len(np.intersect1d(owned, halo)), 0)
        self.assertEqual(int(partition.arrays["part1.owned_mask"].sum()), len(owned))

    def test_stale_upstream(self):
        """Resampling the point cloud invalidates the graph built from it"""
        self._save_chain()
        resampled = multiscale_sample(self.soup, (30, 120), seed=1)
        save_pointcloud(self.root / "pointcloud", resampled, self.soup.total_area, "digest", self.targets)
        with self.assertRaises(ChecksumError) as context:
            load_graph(self.root / "graph", upstream=self.root / "pointcloud")
        self.assertIn("Rebuild", str(context.exception))
        load_graph(self.root / "graph")

    def test_stale_geometry(self):
        """A point cloud is refused once its geometry source has another digest"""
        self._save_chain()
        _, _, bundle = load_pointcloud(self.root / "pointcloud")
        check_source(bundle, "sphere.stl", "digest")
        with self.assertRaises(ChecksumError) as context:
            check_source(bundle, "sphere.stl", "other")
        self.assertIn("Rebuild", str(context.exception))

    def test_prediction_bundle_and_table(self):
        values = np.random.default_rng(1).normal(size=(120, 4))
        names = ("pressure", "wall_shear_x", "wall_shear_y", "wall_shear_z")
        path = self.root / "prediction"
        save_prediction(path, self.cloud.positions, values, names, metadata={"force": 1.5})
        positions, loaded, bundle = load_prediction(path)
        self.assertEqual(loaded.dtype, np.float32)
        np.testing.assert_allclose(loaded, values, rtol=1e-6, atol=1e-6)
        self.assertEqual(bundle.metadata["force"], 1.5)
        with open(path / "predictions.csv", newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual(len(rows), 120)
        self.assertEqual(list(rows[0])[:4], ["node_id", "x", "y", "z"])
        self.assertAlmostEqual(float(rows[5]["pressure"]), values[5, 0], places=6)


class TestGridAndStencilBundles(unittest.TestCase):
    """Testcase for scalar grid and stencil weight bundles"""

    def test_scalar_grid(self):
        grid = ScalarGrid.from_array((0.5, 0.0, -1.0), (0.1, 0.2, 0.3), np.arange(24.0).reshape(2, 3, 4))
        with tempfile.TemporaryDirectory() as directory:
            save_scalar_grid(directory, grid)
            loaded = load_scalar_grid(directory)
        self.assertEqual(tuple(loaded.dims), (4, 3, 2))
        np.testing.assert_array_equal(loaded.origin, grid.origin)
        np.testing.assert_array_equal(loaded.values, grid.values.astype(np.float32))

    def test_stencil(self):
        """A stored stack reproduces the forward pass of the original"""
        stack = StencilStack.from_description(
            [{"kind": "conv", "kernel": 3, "bias": 0.25}, {"kind": "pointwise", "name": "gelu"},
             {"kind": "pool", "factor": 2}, {"kind": "conv", "kernel": 5}],
            seed=4,
        )
        signal = np.random.default_rng(2).normal(size=32)
        with tempfile.TemporaryDirectory() as directory:
            save_stencil(directory, stack)
            loaded = load_stencil(directory)
        self.assertEqual(loaded.describe(), stack.describe())
        np.testing.assert_array_equal(loaded.forward(signal), stack.forward(signal))

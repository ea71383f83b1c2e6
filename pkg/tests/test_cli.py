import json
import tempfile
import unittest
from pathlib import Path

from halograph.bundles import read_manifest
from halograph.cli import BUNDLE_DIRS, main
from halograph.config import SCHEMA_VERSION

TINY_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "precision": "f64",
    "sampling": {"geometry": "synthetic:icosphere", "level_counts": [40, 160], "reference_count": 2000},
    "model": {"layer_count": 2, "hidden_dim": 4},
    "partition": {"partitions": 3},
    "optimizer": {"total_steps": 3},
    "training": {"validation_fraction": 0.1, "log_every_n_steps": 1},
    "verification": {
        "level_counts": [40, 160],
        "layer_counts": [2],
        "partition_counts": [2],
        "hidden_dim": 4,
        "training_steps": 2,
        "knn_instances": 3,
        "knn_max_points": 40,
        "knn_max_k": 4,
        "stencil_stacks": 2,
        "halo_probes": 8,
    },
}


class TestCli(unittest.TestCase):
    """Testcase for the command line pipeline"""

    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        self.config_path = self.root / "config.json"
        self.config_path.write_text(json.dumps(TINY_CONFIG), encoding="utf-8")
        self.out = self.root / "run"

    def tearDown(self) -> None:
        self.directory.cleanup()

    def run_command(self, *args) -> int:
        return main([args[0], "--config", str(self.config_path), "--out", str(self.out), "--quiet", *args[1:]])

    def test_full_pipeline(self):
        """sample, build-graph, partition, train, infer and stats on a tiny synthetic case"""
        for command in ("sample", "build-graph", "partition", "train"):
            self.assertEqual(self.run_command(command), 0, command)
        self.assertEqual(self.run_command("infer", "--partitions", "2"), 0)
        self.assertEqual(self.run_command("stats"), 0)

        for name in BUNDLE_DIRS:
            self.assertTrue((self.out / name / "manifest.json").exists(), name)
        self.assertTrue((self.out / "loss_log.csv").exists())
        self.assertTrue((self.out / "prediction" / "predictions.csv").exists())
        self.assertTrue((self.out / "config.json").exists())

        prediction = read_manifest(self.out / "prediction")
        self.assertIn("force", prediction["metadata"])
        self.assertIn("pressure", prediction["metadata"]["relative_l2_error"])
        self.assertEqual(len(prediction["metadata"]["balance"]["owned_counts"]), 2)
        partition = read_manifest(self.out / "partition")
        self.assertEqual(partition["metadata"]["num_partitions"], 3)
        self.assertEqual(partition["upstream_checksum"], read_manifest(self.out / "graph")["checksum"])

    def test_stale_graph_is_refused(self):
        """Resampling with another seed makes the old graph stale"""
        for command in ("sample", "build-graph"):
            self.assertEqual(self.run_command(command), 0)
        self.assertEqual(self.run_command("sample", "--seed", "1"), 0)
        self.assertEqual(self.run_command("partition"), 2)

    def test_changed_geometry_is_refused(self):
        """Pointing the config at another geometry makes the sampled point cloud stale"""
        self.assertEqual(self.run_command("sample"), 0)
        sampling = dict(TINY_CONFIG["sampling"], geometry="synthetic:superellipsoid")
        self.config_path.write_text(json.dumps(dict(TINY_CONFIG, sampling=sampling)), encoding="utf-8")
        self.assertEqual(self.run_command("build-graph"), 2)
        self.assertEqual(self.run_command("train"), 2)

    def test_repartition_makes_checkpoint_stale(self):
        """A checkpoint trained on an earlier partition is refused by infer"""
        for command in ("sample", "build-graph", "partition", "train"):
            self.assertEqual(self.run_command(command), 0, command)
        self.assertEqual(self.run_command("partition", "--partitions", "2"), 0)
        self.assertEqual(self.run_command("infer", "--partitions", "2"), 2)

    def test_missing_upstream(self):
        self.assertEqual(self.run_command("build-graph"), 2)

    def test_invalid_config(self):
        """A halo shallower than the layer count exits with code 2"""
        data = dict(TINY_CONFIG, partition={"partitions": 3, "halo_depth": 1})
        self.config_path.write_text(json.dumps(data), encoding="utf-8")
        self.assertEqual(self.run_command("sample"), 2)
        self.assertFalse(self.out.exists())

    def test_stats_without_bundles(self):
        self.assertEqual(self.run_command("stats"), 2)

    def test_verify(self):
        self.assertEqual(self.run_command("verify"), 0)
        report = json.loads((self.out / "verification.json").read_text(encoding="utf-8"))
        self.assertTrue(report["passed"])
        self.assertLessEqual(report["max_forward_deviation"], 1e-5)

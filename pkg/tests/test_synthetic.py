import tempfile
import unittest
from pathlib import Path

import numpy as np

from halograph.geometry import icosphere, sample_surface, write_stl_binary
from halograph.gnn import relative_l2_error
from halograph.pointcloud import multiscale_sample
from halograph.synthetic import analytic_targets, analytic_wall_shear, load_geometry, transfer_targets


class TestSyntheticCases(unittest.TestCase):
    """Testcase for synthetic geometries and analytic targets"""

    def test_load_geometry(self):
        """Synthetic sources and STL files give a soup and a stable digest"""
        soup, digest = load_geometry("synthetic:icosphere")
        self.assertEqual(soup.num_triangles, 5120)
        self.assertEqual(load_geometry("synthetic:icosphere")[1], digest)
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "sphere.stl"
            path.write_bytes(write_stl_binary(icosphere(subdivisions=1)))
            loaded, _ = load_geometry(str(path))
            self.assertEqual(loaded.num_triangles, 80)
            with self.assertRaises(FileNotFoundError):
                load_geometry(str(Path(directory) / "missing.stl"))
        with self.assertRaises(ValueError):
            load_geometry("synthetic:torus")

    def test_wall_shear_is_tangential(self):
        samples = sample_surface(icosphere(subdivisions=2), 200, seed=0)
        shear = analytic_wall_shear(samples.positions, samples.normals)
        np.testing.assert_allclose(np.sum(shear * samples.normals, axis=1), 0.0, atol=1e-12)
        self.assertEqual(analytic_targets(samples.positions, samples.normals).shape, (200, 4))

    def test_transferred_targets_follow_the_field(self):
        """Interpolated pressure is close to the analytic pressure"""
        soup = icosphere(subdivisions=3)
        cloud = multiscale_sample(soup, (100, 400), seed=2)
        targets = transfer_targets(soup, cloud, 20000, seed=2)
        exact = analytic_targets(cloud.positions, cloud.normals)
        self.assertEqual(targets.shape, (400, 4))
        self.assertLess(relative_l2_error(targets[:, 0], exact[:, 0])[0], 0.2)

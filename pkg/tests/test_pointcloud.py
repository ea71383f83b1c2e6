import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from halograph.errors import SchemaError
from halograph.geometry import icosphere
from halograph.pointcloud import (
    DEFAULT_FREQUENCIES,
    EPSILON_FLOOR,
    FeatureSchema,
    apply_norm,
    fit_norm,
    fourier_features,
    idw_transfer,
    invert_norm,
    multiscale_sample,
    surface_features,
    surface_schema,
)


class TestMultiscaleSample(unittest.TestCase):
    """Testcase for nested multi-scale sampling"""

    def setUp(self) -> None:
        self.soup = icosphere(subdivisions=2)

    def test_prefix_nesting(self):
        """Every coarse level is the bitwise prefix of the finer one"""
        cloud = multiscale_sample(self.soup, (10, 50, 200), seed=4)
        self.assertEqual(cloud.num_points, 200)
        for level in cloud.levels:
            np.testing.assert_array_equal(level.positions, cloud.positions[: level.count])

    def test_adding_a_level_keeps_coarse_points(self):
        """Sampling with an extra finer level reproduces the coarser cloud exactly"""
        coarse = multiscale_sample(self.soup, (10, 50), seed=4)
        fine = multiscale_sample(self.soup, (10, 50, 200), seed=4)
        np.testing.assert_array_equal(coarse.positions, fine.positions[:50])
        np.testing.assert_array_equal(coarse.triangle_ids, fine.triangle_ids[:50])

    def test_invalid_counts(self):
        """Counts must be positive and strictly increasing"""
        for counts in [(), (0, 10), (10, 10), (20, 10)]:
            with self.assertRaises(ValueError):
                multiscale_sample(self.soup, counts, seed=0)


class TestFeatures(unittest.TestCase):
    """Testcase for node feature matrices"""

    def test_default_width(self):
        """Positions, normals and three frequencies give 24 columns; without positions 21"""
        cloud = multiscale_sample(icosphere(subdivisions=1), (30,), seed=0)
        features = surface_features(cloud.positions, cloud.normals)
        self.assertEqual(features.values.shape, (30, 24))
        self.assertEqual(features.schema, surface_schema(3, True))
        without = surface_features(cloud.positions, cloud.normals, include_positions=False)
        self.assertEqual(without.schema.width, 21)

    def test_fourier_column_order(self):
        """Columns are frequency-major, coordinate-minor, sine before cosine"""
        point = np.array([[0.1, 0.2, 0.3]])
        values = fourier_features(point, DEFAULT_FREQUENCIES).values[0]
        f0 = DEFAULT_FREQUENCIES[0]
        self.assertAlmostEqual(values[0], np.sin(f0 * 0.1))
        self.assertAlmostEqual(values[1], np.cos(f0 * 0.1))
        self.assertAlmostEqual(values[2], np.sin(f0 * 0.2))
        self.assertAlmostEqual(values[6], np.sin(DEFAULT_FREQUENCIES[1] * 0.1))

    def test_schema_mismatch(self):
        """Different column blocks raise a schema error"""
        with self.assertRaises(SchemaError):
            surface_schema(3, True).check(surface_schema(2, True))
        schema = FeatureSchema.from_list(surface_schema().to_list())
        schema.check(surface_schema())


class TestIdwTransfer(unittest.TestCase):
    """Testcase for inverse distance weighted transfer"""

    def test_two_point_example(self):
        """Distances 1 and 3 with values 0 and 4 interpolate to 1"""
        sources = np.array([[1.0, 0.0, 0.0], [-3.0, 0.0, 0.0]])
        result = idw_transfer(sources, np.array([0.0, 4.0]), np.zeros((1, 3)), k=2)
        self.assertAlmostEqual(result[0], 1.0, delta=1e-12)

    def test_coincident_points_are_exact(self):
        """A destination on a source takes its value"""
        rng = np.random.default_rng(0)
        sources = rng.random((20, 3))
        values = rng.normal(size=(20, 4))
        result = idw_transfer(sources, values, sources[[3, 7]], k=5)
        np.testing.assert_array_equal(result, values[[3, 7]])

    @given(constant=st.floats(min_value=-1e3, max_value=1e3), seed=st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_constant_field(self, constant, seed):
        """A constant field stays constant"""
        rng = np.random.default_rng(seed)
        result = idw_transfer(rng.random((30, 3)), np.full(30, constant), rng.random((10, 3)), k=5)
        np.testing.assert_allclose(result, constant, atol=1e-6)

    def test_k_is_capped(self):
        """Asking for more neighbors than sources uses all sources"""
        result = idw_transfer(np.array([[0.0, 0.0, 0.0]]), np.array([2.0]), np.ones((2, 3)), k=5)
        np.testing.assert_allclose(result, [2.0, 2.0])


class TestNormalization(unittest.TestCase):
    """Testcase for z-score normalization"""

    def test_round_trip(self):
        """Normalizing and inverting recovers the values"""
        rng = np.random.default_rng(1)
        values = rng.normal(3.0, 2.0, size=(100, 4))
        stats = fit_norm(values)
        normalized = apply_norm(values, stats)
        np.testing.assert_allclose(normalized.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(normalized.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(invert_norm(normalized, stats), values, atol=1e-12)

    def test_constant_variable_is_clamped(self):
        """A constant column gets the epsilon floor as std"""
        values = np.column_stack([np.arange(10.0), np.full(10, 5.0)])
        stats = fit_norm(values, ["a", "b"])
        self.assertEqual(stats.clamped, [1])
        self.assertEqual(stats.std[1], EPSILON_FLOOR)
        np.testing.assert_array_equal(apply_norm(values, stats)[:, 1], 0.0)

    def test_too_few_samples(self):
        """One sample is not enough to fit"""
        with self.assertRaises(ValueError):
            fit_norm(np.ones((1, 3)))

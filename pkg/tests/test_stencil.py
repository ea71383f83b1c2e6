import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from halograph.geometry import ScalarGrid
from halograph.stencil import (
    Conv,
    Pool,
    StencilStack,
    divergence_central,
    empirical_min_halo,
    grid_partition,
    halo_mismatch,
    receptive_radius,
    required_halo,
    slab_bounds,
    stencil_forward,
)

CONV3 = {"kind": "conv", "kernel": 3}
POOL2 = {"kind": "pool", "factor": 2}
UPSAMPLE2 = {"kind": "upsample", "factor": 2}
SILU = {"kind": "pointwise", "name": "silu"}

LAYER_CHOICES = [
    CONV3,
    {"kind": "conv", "kernel": 1},
    {"kind": "conv", "kernel": 5},
    POOL2,
    SILU,
    {"kind": "pointwise", "name": "relu"},
]


def vector_field(fn, dims=(9, 6, 5), spacing=(0.25, 0.5, 0.3), origin=(0.1, -0.2, 0.3)):
    """Samples ``fn(x, y, z) -> (u, v, w)`` on a grid and returns the three component grids."""
    axes = [origin[a] + spacing[a] * np.arange(dims[a]) for a in range(3)]
    z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    return [ScalarGrid.from_array(origin, spacing, np.broadcast_to(c, x.shape).copy()) for c in fn(x, y, z)]


class TestReceptiveRadius(unittest.TestCase):
    """Testcase for receptive field arithmetic"""

    def test_two_convs(self):
        self.assertEqual(receptive_radius(StencilStack.from_description([CONV3, CONV3])), 2)

    def test_pool_scales_later_convs(self):
        """conv(3), pool(2), conv(3) has radius 1 + 2"""
        self.assertEqual(receptive_radius(StencilStack.from_description([CONV3, POOL2, CONV3])), 3)

    def test_pointwise_only(self):
        self.assertEqual(receptive_radius(StencilStack.from_description([SILU, SILU])), 0)

    def test_fractional_jump(self):
        """Upsampling before any pooling is invalid"""
        with self.assertRaises(ValueError):
            receptive_radius(StencilStack.from_description([UPSAMPLE2, CONV3]))

    def test_upsample_rounds_the_halo_up(self):
        """After an upsample the required halo can exceed the receptive radius"""
        stack = StencilStack.from_description([POOL2, UPSAMPLE2, CONV3], seed=1)
        self.assertEqual(receptive_radius(stack), 1)
        self.assertEqual(required_halo(stack), 2)
        probe = np.random.default_rng(0).normal(size=64)
        self.assertEqual(empirical_min_halo(stack, probe), 2)

    def test_invalid_layers(self):
        with self.assertRaises(ValueError):
            StencilStack.from_description([{"kind": "conv", "kernel": 4}])
        with self.assertRaises(ValueError):
            StencilStack.from_description([{"kind": "dropout"}])
        with self.assertRaises(ValueError):
            Pool(0)
        with self.assertRaises(ValueError):
            Conv(weights=np.ones((3, 5)))


class TestGridPartition(unittest.TestCase):
    """Testcase for slab partitioning and partitioned stencil forward"""

    def setUp(self) -> None:
        self.grid = np.random.default_rng(0).normal(size=64)
        self.stack = StencilStack.from_description([CONV3, CONV3, CONV3], seed=2)
        self.full = self.stack.forward(self.grid)

    def test_single_partition(self):
        """P=1 is the full-grid forward pass"""
        partitions = grid_partition(self.grid, 1, halo=0)
        np.testing.assert_array_equal(stencil_forward(partitions, self.stack), self.full)

    def test_halo_at_radius_is_bitwise_exact(self):
        """64 cells, three conv(3) layers, 4 slabs and halo 3 reproduce the full pass bitwise"""
        partitions = grid_partition(self.grid, 4, halo=3)
        self.assertEqual(stencil_forward(partitions, self.stack).tobytes(), self.full.tobytes())
        self.assertEqual(halo_mismatch(partitions, self.stack, self.full), 0.0)

    def test_halo_below_radius_differs(self):
        """Halo 2 leaves an owned cell next to a cut wrong"""
        partitions = grid_partition(self.grid, 4, halo=2)
        output = stencil_forward(partitions, self.stack)
        wrong = ~np.isfinite(output) | (output != self.full)
        self.assertTrue(np.any(wrong[[15, 16, 31, 32, 47, 48]]))
        self.assertGreater(halo_mismatch(partitions, self.stack, self.full), 0.0)

    def test_halo_monotone(self):
        """Once a halo matches, every larger halo matches too"""
        for halo in range(3, 10):
            partitions = grid_partition(self.grid, 4, halo=halo)
            np.testing.assert_array_equal(stencil_forward(partitions, self.stack, workers=2), self.full)

    def test_halo_replicates_neighbours(self):
        partitions = grid_partition(self.grid, 4, halo=3)
        second = partitions[1]
        self.assertEqual(second.owned, (16, 32))
        self.assertEqual((second.window.start, second.window.stop), (13, 35))
        np.testing.assert_array_equal(second.values, self.grid[13:35])
        self.assertEqual(int(second.owned_mask.sum()), 16)
        self.assertEqual((partitions[0].window.start, partitions[-1].window.stop), (0, 64))

    def test_slab_bounds(self):
        """Owned ranges tile the axis and respect the alignment"""
        self.assertEqual(slab_bounds(10, 3), [(0, 4), (4, 7), (7, 10)])
        self.assertEqual(slab_bounds(12, 2, align=4), [(0, 8), (8, 12)])
        with self.assertRaises(ValueError):
            slab_bounds(3, 4)
        with self.assertRaises(ValueError):
            slab_bounds(10, 2, align=4)

    def test_two_and_three_dimensional_grids(self):
        """Slabs cut along any axis of 2D and 3D grids reproduce the full pass"""
        rng = np.random.default_rng(3)
        for shape in [(16, 32), (8, 12, 16)]:
            ndim = len(shape)
            stack = StencilStack.from_description([CONV3, SILU, CONV3, POOL2, CONV3], ndim=ndim, seed=ndim)
            grid = rng.normal(size=shape)
            full = stack.forward(grid)
            radius = receptive_radius(stack)
            for axis in range(ndim):
                partitions = grid_partition(grid, 2, axis=axis, halo=radius, align=stack.pool_product)
                np.testing.assert_array_equal(stencil_forward(partitions, stack), full)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            grid_partition(self.grid, 2, halo=-1)
        with self.assertRaises(ValueError):
            grid_partition(self.grid, 2, axis=1)
        with self.assertRaises(ValueError):
            grid_partition(np.zeros((2, 2, 2, 2)), 1)


class TestEmpiricalMinHalo(unittest.TestCase):
    """Testcase for the empirical halo search"""

    def setUp(self) -> None:
        self.probe = np.random.default_rng(1).normal(size=96)

    def test_three_convs(self):
        stack = StencilStack.from_description([CONV3, CONV3, CONV3])
        self.assertEqual(empirical_min_halo(stack, self.probe), 3)

    def test_pointwise(self):
        stack = StencilStack.from_description([SILU, {"kind": "pointwise", "name": "tanh"}])
        self.assertEqual(empirical_min_halo(stack, self.probe), 0)

    def test_pooled_stack(self):
        """conv(3), pool(2), conv(3) needs exactly its receptive radius"""
        stack = StencilStack.from_description([CONV3, POOL2, CONV3])
        self.assertEqual(empirical_min_halo(stack, self.probe), receptive_radius(stack))

    @given(
        layers=st.lists(st.sampled_from(LAYER_CHOICES), min_size=1, max_size=5).filter(
            lambda layers: sum(layer["kind"] == "pool" for layer in layers) <= 2
        ),
        seed=st.integers(min_value=0, max_value=1000),
    )
    @settings(max_examples=30, deadline=None)
    def test_random_stacks(self, layers, seed):
        """The empirical minimum equals the receptive radius for random stacks"""
        stack = StencilStack.from_description(layers, seed=seed)
        self.assertEqual(empirical_min_halo(stack, self.probe), receptive_radius(stack))
        self.assertEqual(required_halo(stack), receptive_radius(stack))


class TestDivergence(unittest.TestCase):
    """Testcase for the central difference divergence"""

    def test_divergence_free_field(self):
        """(x, -y, 0) has zero divergence everywhere"""
        field = vector_field(lambda x, y, z: (x, -y, 0.0))
        np.testing.assert_allclose(divergence_central(field).values, 0.0, atol=1e-10)

    def test_identity_field(self):
        """(x, y, z) has divergence 3"""
        field = vector_field(lambda x, y, z: (x, y, z))
        np.testing.assert_allclose(divergence_central(field).values, 3.0, atol=1e-10)

    def test_second_order_convergence(self):
        """Interior error of (sin x, 0, 0) drops by 4 when the spacing halves"""
        errors = []
        for n in (17, 33):
            h = 1.0 / (n - 1)
            field = vector_field(lambda x, y, z: (np.sin(x), 0.0, 0.0), dims=(n, 3, 3), spacing=(h, 0.5, 0.5),
                                 origin=(0.0, 0.0, 0.0))
            divergence = divergence_central(field).as_array()[:, :, 1:-1]
            x = field[0].origin[0] + h * np.arange(1, n - 1)
            errors.append(np.max(np.abs(divergence - np.cos(x))))
        self.assertAlmostEqual(errors[0] / errors[1], 4.0, delta=0.5)

    def test_linearity(self):
        """div(a u + b v) = a div(u) + b div(v)"""
        u = vector_field(lambda x, y, z: (np.sin(x * y), z * z, np.cos(x + z)))
        v = vector_field(lambda x, y, z: (y * z, np.exp(-x), x * y * z))
        a, b = 1.5, -0.25
        combined = [
            ScalarGrid.from_array(p.origin, p.spacing, a * p.as_array() + b * q.as_array()) for p, q in zip(u, v)
        ]
        expected = a * divergence_central(u).values + b * divergence_central(v).values
        np.testing.assert_allclose(divergence_central(combined).values, expected, rtol=1e-12, atol=1e-12)

    def test_invalid_fields(self):
        field = vector_field(lambda x, y, z: (x, y, z))
        with self.assertRaises(ValueError):
            divergence_central(field[:2])
        with self.assertRaises(ValueError):
            divergence_central(vector_field(lambda x, y, z: (x, y, z), dims=(2, 4, 4)))
        shifted = vector_field(lambda x, y, z: (x, y, z), origin=(0.0, 0.0, 0.0))
        with self.assertRaises(ValueError):
            divergence_central([field[0], shifted[1], field[2]])

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import trimesh
from loguru import logger
from tqdm import tqdm

from .soup import TriangleSoup

# Ray directions for the parity vote, slightly off the axes so rays rarely graze edges.
RAY_DIRECTIONS = np.array(
    [
        [1.0, 0.1370563, 0.0716834],
        [-0.0623107, 1.0, 0.1523914],
        [0.1189242, -0.0452271, 1.0],
    ]
)
RAY_DIRECTIONS /= np.linalg.norm(RAY_DIRECTIONS, axis=1, keepdims=True)
CHUNK_POINTS = 20_000


@dataclass(frozen=True)
class ScalarGrid:
    """Scalar values on a regular grid.

    Sample ``(i, j, k)`` sits at ``origin + (i, j, k) * spacing``. Values are stored flat with x varying
    fastest, so ``values.reshape(dims[::-1])`` is indexed ``[k, j, i]``.
    """

    origin: np.ndarray
    spacing: np.ndarray
    dims: Tuple[int, int, int]
    values: np.ndarray

    def __post_init__(self):
        expected = int(np.prod(self.dims))
        if len(self.values) != expected:
            raise ValueError(f"Grid with dims {tuple(self.dims)} needs {expected} values, got {len(self.values)}")
        if np.any(np.asarray(self.spacing) <= 0):
            raise ValueError(f"Grid spacing must be positive, got {self.spacing}")

    @classmethod
    def from_array(cls, origin, spacing, array: np.ndarray) -> "ScalarGrid":
        """Builds a grid from an array indexed ``[k, j, i]``."""
        dims = tuple(int(d) for d in array.shape[::-1])
        return cls(
            origin=np.asarray(origin, dtype=np.float64),
            spacing=_as_spacing(spacing),
            dims=dims,
            values=np.ascontiguousarray(array, dtype=np.float64).ravel(),
        )

    def as_array(self) -> np.ndarray:
        """View of the values indexed ``[k, j, i]``."""
        return self.values.reshape(tuple(self.dims)[::-1])

    def points(self) -> np.ndarray:
        """Sample positions in storage order, shape (N, 3)."""
        return grid_points(self.origin, self.spacing, self.dims)

    def manifest_entry(self) -> dict:
        return {
            "origin": [float(x) for x in self.origin],
            "spacing": [float(x) for x in self.spacing],
            "dims": [int(x) for x in self.dims],
        }


def grid_points(origin, spacing, dims) -> np.ndarray:
    """Positions of all grid samples with x varying fastest."""
    spacing = _as_spacing(spacing)
    axes = [origin[a] + spacing[a] * np.arange(dims[a]) for a in range(3)]
    z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


def signed_distance_grid(
    soup: TriangleSoup,
    origin: Sequence[float],
    spacing,
    dims: Sequence[int],
    show_progress: bool = False,
) -> Tuple[ScalarGrid, Tuple[ScalarGrid, ScalarGrid, ScalarGrid]]:
    """Evaluates the signed distance to a soup on a regular grid, negative inside.

    The sign comes from a majority vote of ray-parity tests along three fixed directions. The gradient
    grids use central differences in the interior and one-sided differences at the boundary.

    Args:
        soup: Closed triangle soup.
        origin: Position of sample (0, 0, 0).
        spacing: Sample spacing, scalar or per axis.
        dims: Number of samples along x, y and z.
        show_progress: Whether to show a progress bar over point chunks.

    Returns:
        Tuple: Signed distance grid and its (d/dx, d/dy, d/dz) gradient grids.
    """
    if not np.all(np.isfinite(soup.vertices)):
        raise ValueError("Soup contains non-finite vertex coordinates")
    dims = tuple(int(d) for d in dims)
    if min(dims) < 2:
        raise ValueError(f"Every grid axis needs at least 2 samples for gradients, got dims {dims}")

    origin = np.asarray(origin, dtype=np.float64)
    spacing = _as_spacing(spacing)
    faces = np.asarray(soup.triangles)[soup.face_areas > 0]
    if not len(faces):
        raise ValueError("Soup has no non-degenerate triangles")
    mesh = trimesh.Trimesh(vertices=soup.vertices, faces=faces, process=False)

    points = grid_points(origin, spacing, dims)
    values = np.empty(len(points))

    starts = range(0, len(points), CHUNK_POINTS)
    for start in tqdm(starts, desc="Signed distance", disable=not show_progress):
        block = points[start:start + CHUNK_POINTS]
        _, distance, _ = trimesh.proximity.closest_point(mesh, block)
        values[start:start + CHUNK_POINTS] = np.where(_inside(mesh, block), -distance, distance)

    grid = ScalarGrid(origin=origin, spacing=spacing, dims=dims, values=values)
    dz, dy, dx = np.gradient(grid.as_array(), spacing[2], spacing[1], spacing[0], edge_order=1)
    gradients = tuple(ScalarGrid.from_array(origin, spacing, g) for g in (dx, dy, dz))
    logger.info("Evaluated signed distance on {} samples against {} triangles", len(points), len(faces))
    return grid, gradients


def _as_spacing(spacing) -> np.ndarray:
    spacing = np.asarray(spacing, dtype=np.float64)
    if spacing.ndim == 0:
        spacing = np.full(3, float(spacing))
    return spacing


def _inside(mesh: trimesh.Trimesh, points: np.ndarray) -> np.ndarray:
    """Majority vote of ray-parity tests: an odd number of crossings means inside."""
    votes = np.zeros(len(points), dtype=np.int64)
    for direction in RAY_DIRECTIONS:
        _, ray_ids, _ = mesh.ray.intersects_location(
            points, np.tile(direction, (len(points), 1)), multiple_hits=True
        )
        votes += np.bincount(ray_ids, minlength=len(points)) % 2
    return votes >= 2

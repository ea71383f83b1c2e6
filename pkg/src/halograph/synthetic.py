"""Synthetic cases: procedural geometries with analytic surface fields.

Targets are defined on a dense reference sampling of the surface and carried onto a point cloud by
inverse distance weighting, the same way reference simulation fields are transferred to sampled points.
"""
import hashlib
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np
from loguru import logger

from .geometry import TriangleSoup, icosphere, read_stl, sample_surface, superellipsoid, write_stl_binary
from .pointcloud import MultiScalePointCloud, idw_transfer

SYNTHETIC_PREFIX = "synthetic:"
REFERENCE_SEED_OFFSET = 7919

SHAPES: Dict[str, Callable[[], TriangleSoup]] = {
    "icosphere": lambda: icosphere(subdivisions=4),
    "superellipsoid": lambda: superellipsoid(radii=(1.0, 0.6, 0.4), exponent=0.6, subdivisions=4),
}


def load_geometry(source: str) -> Tuple[TriangleSoup, str]:
    """Loads an STL path or a ``synthetic:<shape>`` source.

    Returns:
        Tuple[TriangleSoup, str]: The soup and a SHA-256 digest identifying the geometry.
    """
    if source.startswith(SYNTHETIC_PREFIX):
        name = source[len(SYNTHETIC_PREFIX):]
        if name not in SHAPES:
            raise ValueError(f"Unknown synthetic geometry {name!r}, expected one of {sorted(SHAPES)}")
        soup = SHAPES[name]()
        data = write_stl_binary(soup)
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Geometry file {path} does not exist")
        data = path.read_bytes()
        soup = read_stl(path)
    return soup, hashlib.sha256(data).hexdigest()


def geometry_digest(source: str) -> str:
    """SHA-256 digest of a geometry source without parsing STL files."""
    if source.startswith(SYNTHETIC_PREFIX):
        return load_geometry(source)[1]
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"Geometry file {path} does not exist")
    return hashlib.sha256(path.read_bytes()).hexdigest()


def analytic_pressure(positions: np.ndarray) -> np.ndarray:
    """``p = sin(2 pi x) cos(2 pi y) + z``."""
    x, y, z = np.asarray(positions, dtype=np.float64).T
    return np.sin(2.0 * np.pi * x) * np.cos(2.0 * np.pi * y) + z


def analytic_pressure_gradient(positions: np.ndarray) -> np.ndarray:
    x, y, _ = np.asarray(positions, dtype=np.float64).T
    two_pi = 2.0 * np.pi
    return np.stack(
        [
            two_pi * np.cos(two_pi * x) * np.cos(two_pi * y),
            -two_pi * np.sin(two_pi * x) * np.sin(two_pi * y),
            np.ones_like(x),
        ],
        axis=1,
    )


def analytic_wall_shear(positions: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Pressure gradient projected onto the tangent plane: ``g - (g . n) n``."""
    gradient = analytic_pressure_gradient(positions)
    normals = np.asarray(normals, dtype=np.float64)
    return gradient - np.sum(gradient * normals, axis=1, keepdims=True) * normals


def analytic_targets(positions: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Pressure and the three wall shear components, shape (n, 4)."""
    return np.column_stack([analytic_pressure(positions), analytic_wall_shear(positions, normals)])


def reference_field(soup: TriangleSoup, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Dense reference sampling of the analytic targets."""
    samples = sample_surface(soup, count, np.random.SeedSequence([seed, REFERENCE_SEED_OFFSET]))
    return samples.positions, analytic_targets(samples.positions, samples.normals)


def transfer_targets(
    soup: TriangleSoup,
    cloud: MultiScalePointCloud,
    reference_count: int,
    seed: int,
    k: int = 5,
    power: float = 1.0,
) -> np.ndarray:
    """Targets on every cloud point, interpolated from a dense reference sampling."""
    ref_positions, ref_values = reference_field(soup, reference_count, seed)
    targets = idw_transfer(ref_positions, ref_values, cloud.positions, k=k, power=power)
    logger.info("Transferred targets from {} reference points onto {} points", reference_count, cloud.num_points)
    return targets

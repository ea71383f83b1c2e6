from typing import Union

import numpy as np

from .soup import SurfaceSamples, TriangleSoup

SeedLike = Union[int, np.random.SeedSequence]


def sample_surface(soup: TriangleSoup, n: int, seed: SeedLike) -> SurfaceSamples:
    """Draws points uniformly over the surface area of a soup.

    A triangle is chosen with probability proportional to its area, then a point is drawn uniformly
    inside it through the square-root barycentric map. Degenerate faces are never chosen.

    Args:
        soup: Triangle soup to sample.
        n: Number of samples.
        seed: Seed of the random generator. Identical seeds give identical samples.

    Returns:
        SurfaceSamples: ``n`` samples with positions, normals and source triangle ids.
    """
    if n < 0:
        raise ValueError(f"Number of samples must be non-negative but got {n}")

    total_area = soup.total_area
    if not total_area > 0:
        raise ValueError("Cannot sample a soup whose total area is zero (all triangles degenerate)")

    rng = np.random.default_rng(seed)
    triangle_ids = rng.choice(soup.num_triangles, size=n, p=soup.face_areas / total_area)
    r1, r2 = rng.random((2, n))

    sqrt_r1 = np.sqrt(r1)
    u = 1.0 - sqrt_r1
    v = r2 * sqrt_r1
    corners = soup.corners()[triangle_ids]
    positions = u[:, None] * corners[:, 0] + (1.0 - u - v)[:, None] * corners[:, 1] + v[:, None] * corners[:, 2]

    return SurfaceSamples(
        positions=positions,
        normals=soup.face_normals[triangle_ids],
        triangle_ids=triangle_ids.astype(np.int64),
    )

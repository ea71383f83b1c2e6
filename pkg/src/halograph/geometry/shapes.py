"""Procedural closed meshes used for synthetic cases and tests."""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .soup import TriangleSoup

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICOSAHEDRON_VERTICES = [
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
]

_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def icosphere(subdivisions: int = 3, radius: float = 1.0, center: Sequence[float] = (0.0, 0.0, 0.0)) -> TriangleSoup:
    """Subdivided icosahedron with all vertices on a sphere, outward winding.

    Args:
        subdivisions: Number of 1-to-4 face splits. Face count is ``20 * 4**subdivisions``.
        radius: Sphere radius.
        center: Sphere center.

    Returns:
        TriangleSoup: Closed sphere mesh.
    """
    vertices: List[np.ndarray] = [np.asarray(v, dtype=np.float64) / np.linalg.norm(v) for v in _ICOSAHEDRON_VERTICES]
    faces: List[Tuple[int, int, int]] = list(_ICOSAHEDRON_FACES)

    for _ in range(subdivisions):
        midpoints: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                mid = vertices[i] + vertices[j]
                vertices.append(mid / np.linalg.norm(mid))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined

    points = np.asarray(vertices) * radius + np.asarray(center, dtype=np.float64)
    return TriangleSoup.from_arrays(points, np.asarray(faces))


def superellipsoid(
    radii: Sequence[float] = (1.0, 0.6, 0.4),
    exponent: float = 0.6,
    subdivisions: int = 3,
) -> TriangleSoup:
    """Morphed sphere: every unit-sphere vertex ``n`` maps to ``radii * sign(n) * |n| ** exponent``.

    Exponents below 1 give boxier shapes, above 1 pinched ones. The map is monotone per axis so the
    winding of the icosphere stays outward.
    """
    sphere = icosphere(subdivisions)
    unit = sphere.vertices
    morphed = np.asarray(radii, dtype=np.float64) * np.sign(unit) * np.abs(unit) ** exponent
    return TriangleSoup.from_arrays(morphed, sphere.triangles)

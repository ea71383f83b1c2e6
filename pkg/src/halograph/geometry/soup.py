from dataclasses import dataclass
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class TriangleSoup:
    """Indexed triangle set with per-face metrics. Positions are in meters.

    Attributes:
        vertices: Vertex positions, shape (V, 3), float64.
        triangles: Vertex index triples, shape (T, 3), int64.
        face_normals: Unit normals from vertex winding, shape (T, 3). Zero for degenerate faces.
        face_areas: Face areas in square meters, shape (T,).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    face_normals: np.ndarray
    face_areas: np.ndarray

    @classmethod
    def from_arrays(cls, vertices: np.ndarray, triangles: np.ndarray) -> "TriangleSoup":
        """Builds a soup and derives normals and areas from the winding of each face.

        Args:
            vertices: Vertex positions, shape (V, 3).
            triangles: Vertex index triples, shape (T, 3).

        Returns:
            TriangleSoup: Soup with computed face metrics.
        """
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)

        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError(
                f"Triangle indices must lie in [0, {len(vertices)}) but range from "
                f"{triangles.min()} to {triangles.max()}"
            )

        normals, areas = face_metrics(vertices[triangles])
        return cls(vertices=vertices, triangles=triangles, face_normals=normals, face_areas=areas)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def bbox_diagonal(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def corners(self) -> np.ndarray:
        """Triangle corner positions, shape (T, 3, 3)."""
        return self.vertices[self.triangles]


def face_metrics(corners: np.ndarray):
    """Unit normals and areas for an array of triangle corners of shape (T, 3, 3)."""
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    norm = np.linalg.norm(cross, axis=1)
    normals = np.zeros_like(cross)
    nonzero = norm > 0
    normals[nonzero] = cross[nonzero] / norm[nonzero, None]
    return normals, 0.5 * norm


@dataclass(frozen=True)
class SurfaceSample:
    """A single point on the surface together with the normal of the triangle it was drawn from."""

    position: np.ndarray
    normal: np.ndarray
    triangle_id: int


@dataclass(frozen=True)
class SurfaceSamples:
    """Array form of many surface samples.

    Attributes:
        positions: Sample positions, shape (n, 3).
        normals: Normals inherited from the source triangles, shape (n, 3).
        triangle_ids: Source triangle per sample, shape (n,).
    """

    positions: np.ndarray
    normals: np.ndarray
    triangle_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, idx: int) -> SurfaceSample:
        return SurfaceSample(self.positions[idx], self.normals[idx], int(self.triangle_ids[idx]))

    def __iter__(self) -> Iterator[SurfaceSample]:
        for idx in range(len(self)):
            yield self[idx]

    @classmethod
    def concatenate(cls, parts) -> "SurfaceSamples":
        parts = list(parts)
        return cls(
            positions=np.concatenate([part.positions for part in parts]),
            normals=np.concatenate([part.normals for part in parts]),
            triangle_ids=np.concatenate([part.triangle_ids for part in parts]),
        )


def barycentric(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points with respect to their triangles.

    Args:
        points: Points, shape (n, 3).
        corners: Corners of the triangle of each point, shape (n, 3, 3).

    Returns:
        np.ndarray: Coordinates (weight of corner 0, 1, 2), shape (n, 3).
    """
    v0 = corners[:, 1] - corners[:, 0]
    v1 = corners[:, 2] - corners[:, 0]
    v2 = points - corners[:, 0]
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.stack([1.0 - v - w, v, w], axis=1)

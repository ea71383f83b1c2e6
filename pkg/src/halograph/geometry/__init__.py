__all__ = [
    "TriangleSoup",
    "SurfaceSample",
    "SurfaceSamples",
    "barycentric",
    "face_metrics",
    "parse_stl",
    "read_stl",
    "write_stl_binary",
    "merge_vertices",
    "sample_surface",
    "ScalarGrid",
    "grid_points",
    "signed_distance_grid",
    "icosphere",
    "superellipsoid",
]

from .soup import TriangleSoup, SurfaceSample, SurfaceSamples, barycentric, face_metrics
from .stl import parse_stl, read_stl, write_stl_binary, merge_vertices
from .sampling import sample_surface
from .sdf import ScalarGrid, grid_points, signed_distance_grid
from .shapes import icosphere, superellipsoid

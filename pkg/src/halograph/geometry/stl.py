"""STL reading and writing.

Binary layout: 80-byte header, little-endian u32 facet count, then one 50-byte record per facet
(normal, three vertices as 12 f32, u16 attribute). File normals are ignored; normals are recomputed
from the vertex winding.
"""
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from loguru import logger
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import StlParseError
from .soup import TriangleSoup

HEADER_BYTES = 80
RECORD_BYTES = 50
MERGE_TOLERANCE = 1e-9
TEXT_BYTES = bytes(range(32, 127)) + b"\t\n\r\f\v"

RECORD_DTYPE = np.dtype([("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)), ("attribute", "<u2")])


def parse_stl(data: bytes) -> TriangleSoup:
    """Parses an ASCII or binary STL file.

    The file is read as ASCII only if it is plain text starting with ``solid`` and its size does not match
    a binary file with the declared facet count.

    Args:
        data: Raw file content.

    Returns:
        TriangleSoup: Soup with co-located vertices merged.

    Raises:
        StlParseError: On truncated binary records or malformed ASCII facets.
    """
    if _is_binary(data):
        corners = _parse_binary(data)
        kind = "binary"
    else:
        corners = _parse_ascii(data)
        kind = "ascii"

    vertices, triangles = merge_vertices(corners.reshape(-1, 3))
    soup = TriangleSoup.from_arrays(vertices, triangles.reshape(-1, 3))
    logger.info(
        "Parsed {} STL with {} triangles and {} unique vertices", kind, soup.num_triangles, soup.num_vertices
    )
    return soup


def read_stl(path: Union[str, Path]) -> TriangleSoup:
    """Reads and parses an STL file from disk."""
    return parse_stl(Path(path).read_bytes())


def write_stl_binary(soup: TriangleSoup, header: bytes = b"halograph") -> bytes:
    """Serializes a soup to binary STL. Normals are written from the soup's face normals."""
    records = np.zeros(soup.num_triangles, dtype=RECORD_DTYPE)
    records["normal"] = soup.face_normals.astype("<f4")
    records["vertices"] = soup.corners().astype("<f4")
    head = header[:HEADER_BYTES].ljust(HEADER_BYTES, b"\0")
    return head + np.uint32(soup.num_triangles).astype("<u4").tobytes() + records.tobytes()


def merge_vertices(points: np.ndarray, tolerance: float = MERGE_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """Merges points closer than ``tolerance`` into shared vertices.

    Clusters are the connected components of the "closer than tolerance" relation. Each cluster keeps the
    position of its first occurrence, and clusters are numbered in first-occurrence order.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Unique vertices and, for every input point, its vertex index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)

    pairs = cKDTree(points).query_pairs(tolerance, output_type="ndarray")
    adjacency = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(adjacency, directed=False)

    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    return points[first[order]], rank[labels]


def _is_binary(data: bytes) -> bool:
    if len(data) >= HEADER_BYTES + 4:
        count = int.from_bytes(data[HEADER_BYTES:HEADER_BYTES + 4], "little")
        if HEADER_BYTES + 4 + RECORD_BYTES * count == len(data):
            return True
    # Binary headers may start with "solid" too; ASCII files contain only text bytes.
    if data.translate(None, TEXT_BYTES):
        return True
    return not data.lstrip()[:5].lower() == b"solid"


def _parse_binary(data: bytes) -> np.ndarray:
    if len(data) < HEADER_BYTES + 4:
        raise StlParseError(f"Binary STL needs at least {HEADER_BYTES + 4} bytes, got {len(data)}", offset=len(data))

    count = int.from_bytes(data[HEADER_BYTES:HEADER_BYTES + 4], "little")
    expected = HEADER_BYTES + 4 + RECORD_BYTES * count
    if len(data) < expected:
        complete = (len(data) - HEADER_BYTES - 4) // RECORD_BYTES
        raise StlParseError(
            f"Truncated binary STL: header declares {count} triangles, expected length {expected} bytes "
            f"but file has {len(data)}",
            offset=HEADER_BYTES + 4 + RECORD_BYTES * complete,
        )
    if len(data) > expected:
        logger.warning("Ignoring {} trailing bytes after {} binary STL records", len(data) - expected, count)

    records = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER_BYTES + 4)
    return records["vertices"].astype(np.float64)


def _parse_ascii(data: bytes) -> np.ndarray:
    facets: List[List[List[float]]] = []
    loop: List[List[float]] = []
    loop_start = 0
    in_loop = False

    for line_no, raw in enumerate(data.decode("ascii", errors="replace").splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        keyword = tokens[0].lower()

        if keyword == "vertex":
            if not in_loop:
                raise StlParseError("Vertex outside of 'outer loop'", line=line_no)
            if len(tokens) != 4:
                raise StlParseError(f"Vertex needs 3 coordinates, got {len(tokens) - 1}", line=line_no)
            try:
                loop.append([float(token) for token in tokens[1:]])
            except ValueError as error:
                raise StlParseError(f"Invalid vertex coordinate: {error}", line=line_no) from error
        elif keyword == "outer":
            in_loop = True
            loop = []
            loop_start = line_no
        elif keyword == "endloop":
            if len(loop) != 3:
                raise StlParseError(
                    f"Facet starting at line {loop_start} has {len(loop)} vertices, expected 3", line=line_no
                )
            facets.append(loop)
            in_loop = False
        elif keyword in ("solid", "endsolid", "facet", "endfacet"):
            continue
        else:
            raise StlParseError(f"Unexpected token {tokens[0]!r}", line=line_no)

    if in_loop:
        raise StlParseError("File ended inside 'outer loop'", line=loop_start)

    return np.asarray(facets, dtype=np.float64).reshape(-1, 3, 3)

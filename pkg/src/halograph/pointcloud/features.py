from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import SchemaError

DEFAULT_FREQUENCIES = (2.0 * np.pi, 4.0 * np.pi, 8.0 * np.pi)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column blocks of a feature matrix, as (name, width) pairs."""

    blocks: Tuple[Tuple[str, int], ...]

    @property
    def width(self) -> int:
        return sum(width for _, width in self.blocks)

    def to_list(self) -> List[List]:
        return [[name, width] for name, width in self.blocks]

    @classmethod
    def from_list(cls, blocks) -> "FeatureSchema":
        return cls(tuple((str(name), int(width)) for name, width in blocks))

    def check(self, other: "FeatureSchema") -> None:
        """Raises ``SchemaError`` if ``other`` does not describe the same columns."""
        if self.blocks != other.blocks:
            raise SchemaError(f"Feature schema mismatch: expected {self.to_list()}, got {other.to_list()}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-node feature rows with their column schema."""

    values: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.schema.width:
            raise SchemaError(
                f"Feature matrix of shape {self.values.shape} does not match schema width {self.schema.width}"
            )

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]


def fourier_features(positions: np.ndarray, freqs: Sequence[float]) -> FeatureMatrix:
    """Sine and cosine of every coordinate at every angular frequency.

    Columns are frequency-major, coordinate-minor, sine before cosine:
    ``sin(f0 x), cos(f0 x), sin(f0 y), cos(f0 y), ..., cos(f_last z)``.

    Args:
        positions: Points, shape (n, 3).
        freqs: Angular frequencies.

    Returns:
        FeatureMatrix: Block of width ``6 * len(freqs)``.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    if not freqs.size:
        raise ValueError("At least one Fourier frequency is required")
    positions = np.asarray(positions, dtype=np.float64)

    phase = freqs[:, None, None] * positions[None, :, :]
    block = np.stack([np.sin(phase), np.cos(phase)], axis=-1)
    values = block.transpose(1, 0, 2, 3).reshape(len(positions), -1)
    return FeatureMatrix(values=values, schema=FeatureSchema((("fourier", values.shape[1]),)))


def surface_schema(num_freqs: int = len(DEFAULT_FREQUENCIES), include_positions: bool = True) -> FeatureSchema:
    blocks = [("normal", 3), ("fourier", 6 * num_freqs)]
    if include_positions:
        blocks.insert(0, ("position", 3))
    return FeatureSchema(tuple(blocks))


def surface_features(
    positions: np.ndarray,
    normals: np.ndarray,
    freqs: Sequence[float] = DEFAULT_FREQUENCIES,
    include_positions: bool = True,
) -> FeatureMatrix:
    """Node input features: positions (optional), normals and Fourier features."""
    columns = [np.asarray(normals, dtype=np.float64), fourier_features(positions, freqs).values]
    if include_positions:
        columns.insert(0, np.asarray(positions, dtype=np.float64))
    return FeatureMatrix(values=np.hstack(columns), schema=surface_schema(len(freqs), include_positions))

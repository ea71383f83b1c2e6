from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from loguru import logger

from ..geometry import SurfaceSamples, TriangleSoup, sample_surface


def level_seed(seed: int, level: int) -> int:
    """Sub-seed used to draw the points added at ``level``."""
    return int(np.random.SeedSequence([seed, level]).generate_state(1)[0])


@dataclass(frozen=True)
class PointLevel:
    """One level of a multi-scale cloud. Arrays are prefix views of the finest level."""

    level_index: int
    count: int
    positions: np.ndarray
    normals: np.ndarray


@dataclass(frozen=True)
class MultiScalePointCloud:
    """Nested point clouds: level ``i`` is the first ``counts[i]`` points of the finest level.

    Attributes:
        counts: Strictly increasing point counts per level.
        positions: Finest-level positions, shape (counts[-1], 3).
        normals: Finest-level unit normals, shape (counts[-1], 3).
        triangle_ids: Source triangle of every point.
    """

    counts: Tuple[int, ...]
    positions: np.ndarray
    normals: np.ndarray
    triangle_ids: np.ndarray

    @property
    def num_levels(self) -> int:
        return len(self.counts)

    @property
    def num_points(self) -> int:
        return self.counts[-1]

    def level(self, index: int) -> PointLevel:
        count = self.counts[index]
        return PointLevel(
            level_index=index, count=count, positions=self.positions[:count], normals=self.normals[:count]
        )

    @property
    def levels(self) -> Tuple[PointLevel, ...]:
        return tuple(self.level(i) for i in range(self.num_levels))


def multiscale_sample(soup: TriangleSoup, counts: Sequence[int], seed: int) -> MultiScalePointCloud:
    """Samples nested point clouds where every coarse level is a prefix of the next finer one.

    Level 0 draws ``counts[0]`` points; every finer level appends ``counts[i] - counts[i-1]`` fresh
    samples drawn with their own sub-seed, so the coarse points are kept bit for bit.

    Args:
        soup: Surface to sample.
        counts: Strictly increasing, positive point counts.
        seed: Base seed.

    Returns:
        MultiScalePointCloud: The nested cloud.
    """
    counts = tuple(int(c) for c in counts)
    if not counts:
        raise ValueError("At least one level count is required")
    if counts[0] <= 0:
        raise ValueError(f"Level counts must be positive but got {counts}")
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"Level counts must be strictly increasing but got {counts}")

    parts = []
    previous = 0
    for level, count in enumerate(counts):
        parts.append(sample_surface(soup, count - previous, level_seed(seed, level)))
        previous = count
    samples = SurfaceSamples.concatenate(parts)

    logger.info("Sampled {} levels with counts {}", len(counts), counts)
    return MultiScalePointCloud(
        counts=counts, positions=samples.positions, normals=samples.normals, triangle_ids=samples.triangle_ids
    )

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from .stack import StencilStack, Window


@dataclass(frozen=True)
class GridPartition:
    """One slab of a grid cut along ``axis``.

    Attributes:
        part_id: Slab id, increasing along the axis.
        axis: Cut axis.
        owned: Owned index range ``[start, stop)`` along the axis.
        halo: Halo width in cells.
        window: Global range of ``values`` along the axis (owned range widened by the halo, clipped to the grid).
        values: Copy of the grid over ``window``.
    """

    part_id: int
    axis: int
    owned: Tuple[int, int]
    halo: int
    window: Window
    values: np.ndarray

    @property
    def owned_mask(self) -> np.ndarray:
        """Whether each cell of the window along the axis is owned."""
        cells = np.arange(self.window.start, self.window.stop)
        return (cells >= self.owned[0]) & (cells < self.owned[1])

    @property
    def num_owned(self) -> int:
        return self.owned[1] - self.owned[0]


def slab_bounds(extent: int, num_partitions: int, align: int = 1) -> List[Tuple[int, int]]:
    """Owned ranges tiling ``[0, extent)``, each boundary a multiple of ``align``.

    The first ``units % P`` slabs get one extra unit of ``align`` cells.
    """
    if num_partitions < 1:
        raise ValueError(f"Partition count must be at least 1 but got {num_partitions}")
    if align < 1 or extent % align:
        raise ValueError(f"Axis length {extent} is not divisible by the slab alignment {align}")
    units = extent // align
    if units < num_partitions:
        raise ValueError(
            f"Cannot cut {extent} cells into {num_partitions} slabs aligned to {align}: "
            f"some slab would own less than one cell"
        )
    sizes = np.full(num_partitions, units // num_partitions)
    sizes[: units % num_partitions] += 1
    stops = np.cumsum(sizes) * align
    starts = np.concatenate([[0], stops[:-1]])
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


def grid_partition(
    grid: np.ndarray, num_partitions: int, axis: int = 0, halo: int = 0, align: int = 1
) -> List[GridPartition]:
    """Cuts a grid into slabs along ``axis`` and copies each slab's owned cells plus ``halo`` cells per side.

    Args:
        grid: 1D, 2D or 3D array.
        num_partitions: Number of slabs.
        axis: Cut axis.
        halo: Halo width in cells.
        align: Slab boundaries are multiples of this (use ``stack.pool_product`` for pooled stacks).

    Returns:
        List[GridPartition]: Slabs in axis order.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if not 1 <= grid.ndim <= 3:
        raise ValueError(f"Grids must be 1D, 2D or 3D, got {grid.ndim} dimensions")
    if not 0 <= axis < grid.ndim:
        raise ValueError(f"Axis {axis} is out of range for a {grid.ndim}D grid")
    if halo < 0:
        raise ValueError(f"Halo width must be non-negative but got {halo}")

    extent = grid.shape[axis]
    partitions = []
    for part_id, (start, stop) in enumerate(slab_bounds(extent, num_partitions, align)):
        window = Window(max(start - halo, 0), min(stop + halo, extent), extent)
        values = np.take(grid, np.arange(window.start, window.stop), axis=axis)
        partitions.append(
            GridPartition(part_id=part_id, axis=axis, owned=(start, stop), halo=halo, window=window, values=values)
        )
    return partitions


def slab_forward(partition: GridPartition, stack: StencilStack) -> np.ndarray:
    """Runs the stack on one slab and returns the outputs of its owned cells."""
    values, window = stack.run_window(partition.values, partition.axis, partition.window)
    scale = stack.scale
    start, stop = (partition.owned[0] * scale, partition.owned[1] * scale)
    if start.denominator != 1 or stop.denominator != 1:
        raise ValueError(
            f"Owned range {partition.owned} does not map to whole output cells at scale {scale}; "
            f"align slabs to {stack.pool_product}"
        )
    index = np.arange(int(start) - window.start, int(stop) - window.start)
    return np.take(values, index, axis=partition.axis)


def stencil_forward(partitions: List[GridPartition], stack: StencilStack, workers: int = 1) -> np.ndarray:
    """Runs every slab independently and concatenates the owned outputs along the cut axis."""
    if not partitions:
        raise ValueError("At least one partition is required")

    def run(partition: GridPartition) -> np.ndarray:
        return slab_forward(partition, stack)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run, partitions))
    else:
        outputs = [run(partition) for partition in partitions]
    return np.concatenate(outputs, axis=partitions[0].axis)


def empirical_min_halo(
    stack: StencilStack,
    probe: np.ndarray,
    num_partitions: int = 4,
    axis: int = 0,
    max_halo: Optional[int] = None,
) -> int:
    """Smallest halo for which the partitioned forward pass equals the full pass exactly on every owned cell.

    Halos are tried upwards from 0. Unknown cells are NaN and never compare equal, so a halo passes only
    when no owned output depends on a missing input.

    Args:
        stack: Stack to probe.
        probe: Probe grid, ideally with random values.
        num_partitions: Number of slabs.
        axis: Cut axis.
        max_halo: Largest halo to try. Defaults to the axis length, where every slab sees the whole grid.

    Returns:
        int: The minimal halo width.
    """
    probe = np.asarray(probe, dtype=np.float64)
    expected = stack.forward(probe)
    limit = probe.shape[axis] if max_halo is None else max_halo
    for halo in range(limit + 1):
        partitions = grid_partition(probe, num_partitions, axis, halo, align=stack.pool_product)
        if np.array_equal(stencil_forward(partitions, stack), expected):
            return halo
    raise ValueError(f"No halo up to {limit} reproduces the full forward pass")


def halo_mismatch(partitions: List[GridPartition], stack: StencilStack, full: np.ndarray) -> float:
    """Largest absolute owned-cell deviation from the full pass; ``inf`` where an owned output is unknown."""
    partitioned = stencil_forward(partitions, stack)
    deviation = np.abs(partitioned - full)
    deviation[~np.isfinite(partitioned)] = np.inf
    worst = float(deviation.max()) if deviation.size else 0.0
    if worst > 0:
        logger.debug("Stencil halo {} leaves a deviation of {}", partitions[0].halo, worst)
    return worst

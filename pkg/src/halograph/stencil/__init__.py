__all__ = [
    "POINTWISE",
    "Window",
    "Conv",
    "Pool",
    "Upsample",
    "Pointwise",
    "StencilStack",
    "receptive_radius",
    "required_halo",
    "GridPartition",
    "slab_bounds",
    "grid_partition",
    "slab_forward",
    "stencil_forward",
    "empirical_min_halo",
    "halo_mismatch",
    "divergence_central",
]

from .stack import POINTWISE, Window, Conv, Pool, Upsample, Pointwise, StencilStack, receptive_radius, required_halo
from .halo import GridPartition, slab_bounds, grid_partition, slab_forward, stencil_forward, empirical_min_halo, \
    halo_mismatch
from .divergence import divergence_central

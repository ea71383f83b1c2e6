from typing import Sequence

import numpy as np

from ..geometry import ScalarGrid


def divergence_central(field: Sequence[ScalarGrid]) -> ScalarGrid:
    """Divergence of a vector field given as three scalar grids (x, y and z components).

    Interior cells use central differences ``(f[i+1] - f[i-1]) / (2 h)``; boundary cells use one-sided
    first-order differences.

    Args:
        field: Components on grids with identical origin, spacing and dims.

    Returns:
        ScalarGrid: Divergence on the same grid.
    """
    if len(field) != 3:
        raise ValueError(f"A vector field needs 3 component grids, got {len(field)}")
    reference = field[0]
    for component in field[1:]:
        if (
            tuple(component.dims) != tuple(reference.dims)
            or not np.array_equal(component.spacing, reference.spacing)
            or not np.array_equal(component.origin, reference.origin)
        ):
            raise ValueError("Vector field components must share origin, spacing and dims")
    if min(reference.dims) < 3:
        raise ValueError(f"Central differences need at least 3 samples per axis, got dims {tuple(reference.dims)}")

    # Arrays are indexed [k, j, i]: x varies along array axis 2.
    divergence = np.zeros(tuple(reference.dims)[::-1])
    for component_axis, component in enumerate(field):
        array_axis = 2 - component_axis
        divergence += np.gradient(
            component.as_array(), reference.spacing[component_axis], axis=array_axis, edge_order=1
        )
    return ScalarGrid.from_array(reference.origin, reference.spacing, divergence)

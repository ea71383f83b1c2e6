"""Single-channel stencil stacks on regular 1D, 2D or 3D grids.

Every layer works on a window of the grid along one cut axis. Cells of the window that lie outside the
grid are zero (domain boundary padding); cells inside the grid but outside the window are unknown and
carried as NaN, so an output cell is finite only if every input it depends on was available. With the
full grid as window this is the plain forward pass.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf, expit

POINTWISE: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "silu": lambda x: x * expit(x),
    "gelu": lambda x: 0.5 * x * (1.0 + erf(x / np.sqrt(2.0))),
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
}


@dataclass(frozen=True)
class Window:
    """Global index range ``[start, stop)`` covered along the cut axis, plus the grid extent there."""

    start: int
    stop: int
    extent: int

    @property
    def at_lower_boundary(self) -> bool:
        return self.start <= 0

    @property
    def at_upper_boundary(self) -> bool:
        return self.stop >= self.extent


@dataclass(frozen=True)
class Conv:
    """Stride-1 convolution with an odd kernel, zero padding at domain boundaries.

    ``out[x] = bias + sum_o weights[o] * in[x + o - r]`` with ``r = (k - 1) / 2``, summed over the kernel
    offsets in C order.
    """

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        shape = np.shape(self.weights)
        if not shape or len(set(shape)) != 1 or shape[0] % 2 == 0:
            raise ValueError(f"Convolution kernels must be odd and square, got shape {shape}")

    @property
    def kernel_size(self) -> int:
        return int(np.shape(self.weights)[0])

    @property
    def radius(self) -> int:
        return (self.kernel_size - 1) // 2

    def describe(self) -> dict:
        return {"kind": "conv", "kernel": self.kernel_size}

    def apply(self, values: np.ndarray, axis: int, window: Window) -> Tuple[np.ndarray, Window]:
        if self.weights.ndim != values.ndim:
            raise ValueError(f"A {self.weights.ndim}D kernel cannot run on a {values.ndim}D grid")
        r = self.radius
        padded = values
        for ax in range(values.ndim):
            if ax == axis:
                lower = 0.0 if window.at_lower_boundary else np.nan
                upper = 0.0 if window.at_upper_boundary else np.nan
            else:
                lower = upper = 0.0
            padded = _pad(padded, ax, r, lower, upper)

        result = np.zeros(values.shape, dtype=np.float64)
        for offset in np.ndindex(self.weights.shape):
            view = tuple(slice(o, o + n) for o, n in zip(offset, values.shape))
            result = result + self.weights[offset] * padded[view]
        return result + self.bias, window


@dataclass(frozen=True)
class Pool:
    """Average pooling with windows aligned to multiples of ``factor`` along every axis."""

    factor: int

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"Pool factor must be at least 1, got {self.factor}")

    def describe(self) -> dict:
        return {"kind": "pool", "factor": self.factor}

    def apply(self, values: np.ndarray, axis: int, window: Window) -> Tuple[np.ndarray, Window]:
        f = self.factor
        if f == 1:
            return values, window
        for ax, size in enumerate(values.shape):
            if ax != axis and size % f:
                raise ValueError(f"Axis {ax} of length {size} is not divisible by the pool factor {f}")
        if window.extent % f:
            raise ValueError(f"Cut axis of length {window.extent} is not divisible by the pool factor {f}")

        start = (window.start // f) * f
        stop = -(-window.stop // f) * f
        values = _pad(
            values, axis, 0, np.nan, np.nan, lower_count=window.start - start, upper_count=stop - window.stop
        )

        pooled_shape = tuple(size // f for size in values.shape)
        total = np.zeros(pooled_shape, dtype=np.float64)
        for offset in np.ndindex(*([f] * values.ndim)):
            view = tuple(slice(o, None, f) for o in offset)
            total = total + values[view]
        return total / f ** values.ndim, Window(start // f, stop // f, window.extent // f)


@dataclass(frozen=True)
class Upsample:
    """Nearest-neighbour upsampling along every axis."""

    factor: int

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"Upsample factor must be at least 1, got {self.factor}")

    def describe(self) -> dict:
        return {"kind": "upsample", "factor": self.factor}

    def apply(self, values: np.ndarray, axis: int, window: Window) -> Tuple[np.ndarray, Window]:
        f = self.factor
        for ax in range(values.ndim):
            values = np.repeat(values, f, axis=ax)
        return values, Window(window.start * f, window.stop * f, window.extent * f)


@dataclass(frozen=True)
class Pointwise:
    name: str

    def __post_init__(self):
        if self.name not in POINTWISE:
            raise ValueError(f"Pointwise op must be one of {sorted(POINTWISE)}, got {self.name!r}")

    def describe(self) -> dict:
        return {"kind": "pointwise", "name": self.name}

    def apply(self, values: np.ndarray, axis: int, window: Window) -> Tuple[np.ndarray, Window]:
        return POINTWISE[self.name](values), window


Layer = Union[Conv, Pool, Upsample, Pointwise]


@dataclass(frozen=True)
class StencilStack:
    layers: Tuple[Layer, ...] = field(default_factory=tuple)

    @classmethod
    def from_description(cls, description: Sequence[dict], ndim: int = 1, seed: int = 0) -> "StencilStack":
        """Builds a stack from ``describe()`` entries, drawing conv weights from a seeded normal distribution."""
        rng = np.random.default_rng(seed)
        layers: List[Layer] = []
        for entry in description:
            kind = entry.get("kind")
            if kind == "conv":
                k = int(entry["kernel"])
                if k < 1 or k % 2 == 0:
                    raise ValueError(f"Convolution kernels must be odd, got {k}")
                weights = rng.normal(0.0, 1.0 / np.sqrt(k ** ndim), (k,) * ndim)
                layers.append(Conv(weights=weights, bias=float(entry.get("bias", 0.0))))
            elif kind == "pool":
                layers.append(Pool(int(entry["factor"])))
            elif kind == "upsample":
                layers.append(Upsample(int(entry["factor"])))
            elif kind == "pointwise":
                layers.append(Pointwise(entry["name"]))
            else:
                raise ValueError(f"Unknown stencil layer kind {kind!r}")
        return cls(tuple(layers))

    def describe(self) -> List[dict]:
        return [layer.describe() for layer in self.layers]

    @property
    def pool_product(self) -> int:
        """Slab boundaries must be multiples of this so every pooling window lies in one slab."""
        product = 1
        for layer in self.layers:
            if isinstance(layer, Pool):
                product *= layer.factor
        return product

    @property
    def scale(self) -> Fraction:
        """Output cells per input cell along each axis."""
        scale = Fraction(1)
        for layer in self.layers:
            if isinstance(layer, Pool):
                scale /= layer.factor
            elif isinstance(layer, Upsample):
                scale *= layer.factor
        return scale

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Full-grid forward pass with zero padding at every boundary."""
        values = np.asarray(values, dtype=np.float64)
        result, _ = self.run_window(values, 0, Window(0, values.shape[0], values.shape[0]))
        return result

    def run_window(self, values: np.ndarray, axis: int, window: Window) -> Tuple[np.ndarray, Window]:
        """Runs all layers on a window of the grid along ``axis``."""
        for layer in self.layers:
            values, window = layer.apply(values, axis, window)
        return values, window


def receptive_radius(stack: StencilStack) -> int:
    """Input cells on either side that one output cell depends on.

    A forward traversal tracks the jump ``j``, the input-cell distance between adjacent cells at the
    current layer: a convolution adds ``((k - 1) / 2) * j``, pooling multiplies ``j`` by its factor and
    upsampling divides it.

    Raises:
        ValueError: If upsampling makes the jump fractional.
    """
    radius = 0
    jump = Fraction(1)
    for layer in stack.layers:
        if isinstance(layer, Conv):
            radius += layer.radius * jump
        elif isinstance(layer, Pool):
            jump *= layer.factor
        elif isinstance(layer, Upsample):
            jump /= layer.factor
            if jump.denominator != 1:
                raise ValueError(
                    f"Upsampling by {layer.factor} makes the input jump {jump} fractional; the stack is invalid"
                )
    return int(radius)


def required_halo(stack: StencilStack) -> int:
    """Smallest halo for slabs aligned to ``stack.pool_product``, from a backward pass over the layers.

    Equals ``receptive_radius`` for stacks without upsampling. After an upsample, a halo cell counts as a
    whole coarse cell, so the requirement is rounded up and can exceed the receptive radius.
    """
    need = 0
    for layer in reversed(stack.layers):
        if isinstance(layer, Conv):
            need += layer.radius
        elif isinstance(layer, Pool):
            need *= layer.factor
        elif isinstance(layer, Upsample):
            need = -(-need // layer.factor)
    return need


def _pad(
    values: np.ndarray,
    axis: int,
    count: int,
    lower_value: float,
    upper_value: float,
    lower_count: Optional[int] = None,
    upper_count: Optional[int] = None,
) -> np.ndarray:
    lower_count = count if lower_count is None else lower_count
    upper_count = count if upper_count is None else upper_count
    if lower_count == 0 and upper_count == 0:
        return values
    shape = list(values.shape)
    shape[axis] = lower_count
    lower = np.full(shape, lower_value)
    shape[axis] = upper_count
    upper = np.full(shape, upper_value)
    return np.concatenate([lower, values, upper], axis=axis)

"""Primitive operations with exact adjoints. Node and edge features are rows of rank-2 tensors."""
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf, expit

from .tape import Tensor

LAYERNORM_EPS = 1e-5


def _require(condition: bool, op: str, *tensors) -> None:
    if not condition:
        shapes = ", ".join(str(t.shape if isinstance(t, Tensor) else np.shape(t)) for t in tensors)
        raise ValueError(f"Shape mismatch in {op}: {shapes}")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` for x (n, i), weight (i, o), bias (o,)."""
    _require(x.value.ndim == 2 and weight.value.ndim == 2 and x.shape[1] == weight.shape[0], "linear", x, weight)
    out = x.value @ weight.value
    inputs = [x, weight]
    if bias is not None:
        _require(bias.value.shape == (weight.shape[1],), "linear", weight, bias)
        out = out + bias.value
        inputs.append(bias)

    def grad(g):
        grads = [g @ weight.value.T, x.value.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return x.tape.record(out, inputs, grad)


def silu(x: Tensor) -> Tensor:
    """``x * sigmoid(x)``."""
    sig = expit(x.value)

    def grad(g):
        return [g * sig * (1.0 + x.value * (1.0 - sig))]

    return x.tape.record(x.value * sig, [x], grad)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    cdf = 0.5 * (1.0 + erf(x.value / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.value * x.value) / np.sqrt(2.0 * np.pi)

    def grad(g):
        return [g * (cdf + x.value * pdf)]

    return x.tape.record(x.value * cdf, [x], grad)


def layernorm(x: Tensor, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None) -> Tensor:
    """Normalizes every row to zero mean and unit variance, then applies an optional affine map.

    Statistics are per row, so the result for a node never depends on other nodes.
    """
    _require(x.value.ndim == 2, "layernorm", x)
    mean = x.value.mean(axis=1, keepdims=True)
    centered = x.value - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + LAYERNORM_EPS)
    xhat = centered * inv_std

    out = xhat
    inputs = [x]
    if gamma is not None:
        _require(gamma.value.shape == (x.shape[1],), "layernorm", x, gamma)
        out = out * gamma.value
        inputs.append(gamma)
    if beta is not None:
        _require(beta.value.shape == (x.shape[1],), "layernorm", x, beta)
        out = out + beta.value
        inputs.append(beta)

    def grad(g):
        dxhat = g * gamma.value if gamma is not None else g
        dx = inv_std * (
            dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        grads = [dx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=0))
        if beta is not None:
            grads.append(g.sum(axis=0))
        return grads

    return x.tape.record(out, inputs, grad)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenates tensors with equal row counts along columns."""
    tensors = list(tensors)
    _require(
        len(tensors) > 0 and all(t.value.ndim == 2 and t.shape[0] == tensors[0].shape[0] for t in tensors),
        "concat_cols",
        *tensors,
    )
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def grad(g):
        return np.split(g, splits, axis=1)

    return tensors[0].tape.record(np.concatenate([t.value for t in tensors], axis=1), tensors, grad)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equally shaped tensors."""
    _require(a.shape == b.shape, "add", a, b)
    return a.tape.record(a.value + b.value, [a, b], lambda g: [g, g])


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    _require(a.shape == b.shape, "mul", a, b)
    return a.tape.record(a.value * b.value, [a, b], lambda g: [g * b.value, g * a.value])


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiplies by a constant scalar."""
    return x.tape.record(x.value * factor, [x], lambda g: [g * factor])


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries as a (1, 1) tensor."""
    return x.tape.record(np.reshape(x.value.sum(), (1, 1)), [x], lambda g: [np.full(x.shape, g.item(), g.dtype)])


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Rows ``x[idx]``. The adjoint adds each output row back onto its source row."""
    idx = np.asarray(idx, dtype=np.int64)
    _require(x.value.ndim == 2 and (not idx.size or (idx.min() >= 0 and idx.max() < x.shape[0])),
             "gather_rows", x, idx)

    def grad(g):
        dx = np.zeros_like(x.value)
        np.add.at(dx, idx, g)
        return [dx]

    return x.tape.record(x.value[idx], [x], grad)


def scatter_sum(x: Tensor, idx: np.ndarray, out_rows: int) -> Tensor:
    """Sums row ``e`` of ``x`` into output row ``idx[e]``. Rows receiving nothing are zero."""
    idx = np.asarray(idx, dtype=np.int64)
    _require(x.value.ndim == 2 and idx.shape == (x.shape[0],), "scatter_sum", x, idx)
    _require(not idx.size or (idx.min() >= 0 and idx.max() < out_rows), "scatter_sum", x, (out_rows,))
    out = np.zeros((out_rows, x.shape[1]), dtype=x.value.dtype)
    np.add.at(out, idx, x.value)
    return x.tape.record(out, [x], lambda g: [g[idx]])


def masked_sse(pred: Tensor, target, mask: Optional[np.ndarray] = None) -> Tensor:
    """Sum of squared errors over the rows selected by ``mask``, as a (1, 1) tensor. No averaging."""
    target = target.value if isinstance(target, Tensor) else np.asarray(target, dtype=pred.value.dtype)
    _require(pred.shape == target.shape, "masked_sse", pred, target)
    mask = np.ones(pred.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    _require(mask.shape == (pred.shape[0],), "masked_sse", pred, mask)

    diff = (pred.value - target) * mask[:, None]
    value = np.reshape(np.sum(diff * diff), (1, 1))
    return pred.tape.record(value, [pred], lambda g: [2.0 * g.item() * diff])

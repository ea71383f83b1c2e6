"""Reverse-mode automatic differentiation on a recorded tape of rank-2 array operations."""
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Value recorded on a tape. Create tensors through ``Tape.constant`` or ``Tape.parameter``."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value: np.ndarray, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.value.dtype}, index={self.index})"


class Tape:
    """Ordered record of operations. Every operation's inputs precede it, so reverse order is topological.

    Args:
        dtype: Floating point precision of all recorded values.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._nodes: List[Optional[Tuple[Tuple[int, ...], BackwardFn]]] = []
        self._tensors: List[Tensor] = []
        self.parameters: Dict[str, Tensor] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def constant(self, value) -> Tensor:
        """Leaf that receives no gradient."""
        return self._leaf(value)

    def parameter(self, name: str, value) -> Tensor:
        """Leaf registered under ``name`` whose gradient ``backward`` returns."""
        if name in self.parameters:
            raise ValueError(f"Parameter {name!r} is already registered on this tape")
        tensor = self._leaf(value)
        self.parameters[name] = tensor
        return tensor

    def record(self, value: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        """Appends an operation result computed from ``inputs``."""
        for tensor in inputs:
            if tensor.tape is not self:
                raise ValueError("All inputs of an operation must live on the same tape")
        tensor = Tensor(np.asarray(value, dtype=self.dtype), self, len(self._nodes))
        self._nodes.append((tuple(t.index for t in inputs), backward))
        self._tensors.append(tensor)
        return tensor

    def _leaf(self, value) -> Tensor:
        tensor = Tensor(np.array(value, dtype=self.dtype), self, len(self._nodes))
        self._nodes.append(None)
        self._tensors.append(tensor)
        return tensor


def backward(tape: Tape, loss: Tensor) -> Dict[str, np.ndarray]:
    """Propagates adjoints from a scalar loss back to every registered parameter.

    Args:
        tape: Tape holding the loss computation.
        loss: Scalar result (any shape with exactly one element).

    Returns:
        Dict[str, np.ndarray]: Gradient per parameter name, zero for parameters the loss does not use.
    """
    if loss.tape is not tape:
        raise ValueError("Loss tensor was not recorded on this tape")
    if loss.value.size != 1:
        raise ValueError(f"Loss must be a scalar but has shape {loss.shape}")

    adjoints: List[Optional[np.ndarray]] = [None] * (loss.index + 1)
    adjoints[loss.index] = np.ones_like(loss.value)

    for index in range(loss.index, -1, -1):
        node = tape._nodes[index]
        adjoint = adjoints[index]
        if node is None or adjoint is None:
            continue
        inputs, backward_fn = node
        for input_index, grad in zip(inputs, backward_fn(adjoint)):
            if grad is None:
                continue
            if adjoints[input_index] is None:
                adjoints[input_index] = grad
            else:
                adjoints[input_index] = adjoints[input_index] + grad
        adjoints[index] = None

    gradients = {}
    for name, tensor in tape.parameters.items():
        grad = adjoints[tensor.index] if tensor.index < len(adjoints) else None
        gradients[name] = np.zeros_like(tensor.value) if grad is None else grad.reshape(tensor.shape)
    return gradients

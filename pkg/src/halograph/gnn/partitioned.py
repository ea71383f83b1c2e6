"""Partitioned execution.

Each partition runs the model on its local graph (owned nodes plus an L-hop halo). Owned rows then match
the full-graph result, losses are sums over owned nodes only, and per-partition gradients add up to the
full-graph gradient.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..diff import OptimizerState, Tape, adam_step, backward, clip_by_global_norm, cosine_lr, masked_sse
from ..errors import HaloDepthError, NonFiniteError
from ..graph import Graph
from ..partition import Partition, PartitionSet
from .model import Model, Prediction, forward


@dataclass(frozen=True)
class LossTerms:
    """Summed squared errors and gradients of one graph or partition.

    Attributes:
        sse: Squared error summed over the training entries.
        validation_sse: Squared error summed over the validation entries (0 without a validation mask).
        grads: Gradient of ``sse`` per parameter name.
    """

    sse: float
    validation_sse: float
    grads: Dict[str, np.ndarray]


@dataclass(frozen=True)
class StepResult:
    """Outcome of one optimizer step.

    Attributes:
        step: Step index the update was computed at.
        loss: Mean squared error over the training entries before the update.
        validation_loss: Mean squared error over the validation entries before the update, NaN without them.
        grad_norm: Global gradient norm before clipping.
        lr: Learning rate used for the update.
    """

    step: int
    loss: float
    validation_loss: float
    grad_norm: float
    lr: float


def check_halo_depth(partition: Partition, model: Model) -> None:
    if partition.halo_depth < model.config.layer_count:
        raise HaloDepthError(
            f"Partition {partition.part_id} has halo depth {partition.halo_depth} but the model has "
            f"{model.config.layer_count} message passing layers"
        )


def partition_forward(partition: Partition, graph: Graph, node_features: np.ndarray, model: Model) -> Prediction:
    """Runs the model on one partition and returns the owned rows in global-id order.

    Args:
        partition: Partition with a halo at least as deep as the model.
        graph: Full graph the partition was cut from.
        node_features: Features of all nodes of the full graph.
        model: Model to run.

    Returns:
        Prediction: One row per owned node.
    """
    check_halo_depth(partition, model)
    return local_forward(partition, graph, node_features, model)


def local_forward(partition: Partition, graph: Graph, node_features: np.ndarray, model: Model) -> Prediction:
    """``partition_forward`` without the halo depth check. Owned rows may be wrong if the halo is too shallow."""
    tape = Tape(model.dtype)
    local_features = np.asarray(node_features, dtype=model.dtype)[partition.local_nodes]
    output = forward(partition.subgraph(graph), local_features, model.bind(tape))
    return Prediction(values=output.value[partition.owned_mask], node_ids=partition.owned)


def gather_predictions(
    partition_set: PartitionSet, graph: Graph, node_features: np.ndarray, model: Model, workers: int = 1
) -> Prediction:
    """Runs every partition and places the owned rows by global id; halo rows are discarded."""
    def run(partition: Partition) -> Prediction:
        return partition_forward(partition, graph, node_features, model)

    values = np.zeros((graph.node_count, model.config.output_width), dtype=model.dtype)
    for prediction in map_partitions(run, partition_set, workers):
        values[prediction.node_ids] = prediction.values
    return Prediction(values=values, node_ids=np.arange(graph.node_count, dtype=np.int64))


def loss_terms(
    graph: Graph,
    node_features: np.ndarray,
    targets: np.ndarray,
    model: Model,
    mask: Optional[np.ndarray] = None,
    validation_mask: Optional[np.ndarray] = None,
) -> LossTerms:
    """Forward, masked squared error and backward on one graph."""
    tape = Tape(model.dtype)
    targets = np.asarray(targets, dtype=model.dtype)
    output = forward(graph, np.asarray(node_features, dtype=model.dtype), model.bind(tape))
    loss = masked_sse(output, targets, mask)

    validation_sse = 0.0
    if validation_mask is not None:
        residual = output.value[validation_mask] - targets[validation_mask]
        validation_sse = float(np.sum(residual * residual))
    return LossTerms(sse=float(loss.value.item()), validation_sse=validation_sse, grads=backward(tape, loss))


def partition_loss_terms(
    partition: Partition,
    graph: Graph,
    node_features: np.ndarray,
    targets: np.ndarray,
    model: Model,
    train_mask: Optional[np.ndarray] = None,
    validation_mask: Optional[np.ndarray] = None,
) -> LossTerms:
    """Loss over the partition's owned training nodes. Halo nodes are filtered out before the loss."""
    check_halo_depth(partition, model)
    owned = partition.owned_mask
    mask = owned if train_mask is None else owned & np.asarray(train_mask, dtype=bool)[partition.local_nodes]
    local_validation = None
    if validation_mask is not None:
        local_validation = owned & np.asarray(validation_mask, dtype=bool)[partition.local_nodes]

    terms = loss_terms(
        partition.subgraph(graph),
        np.asarray(node_features)[partition.local_nodes],
        np.asarray(targets)[partition.local_nodes],
        model,
        mask,
        local_validation,
    )
    if not np.isfinite(terms.sse):
        raise NonFiniteError(f"Loss is {terms.sse}", partition_id=partition.part_id)
    for name, grad in terms.grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Non-finite gradient for parameter {name!r}", partition_id=partition.part_id)
    return terms


def aggregate_loss_terms(
    partition_set: PartitionSet,
    graph: Graph,
    node_features: np.ndarray,
    targets: np.ndarray,
    model: Model,
    train_mask: Optional[np.ndarray] = None,
    validation_mask: Optional[np.ndarray] = None,
    workers: int = 1,
) -> LossTerms:
    """Sums losses and gradients over all partitions in partition id order.

    Partitions may run concurrently; the reduction always adds them in id order so the result does not
    depend on ``workers``.
    """
    def run(partition: Partition) -> LossTerms:
        return partition_loss_terms(partition, graph, node_features, targets, model, train_mask, validation_mask)

    sse = 0.0
    validation_sse = 0.0
    grads: Dict[str, np.ndarray] = {name: np.zeros_like(value) for name, value in model.params.items()}
    for terms in map_partitions(run, partition_set, workers):
        sse += terms.sse
        validation_sse += terms.validation_sse
        for name, grad in terms.grads.items():
            grads[name] += grad
    return LossTerms(sse=sse, validation_sse=validation_sse, grads=grads)


def partitioned_train_step(
    partition_set: PartitionSet,
    graph: Graph,
    node_features: np.ndarray,
    targets: np.ndarray,
    model: Model,
    opt_state: OptimizerState,
    train_mask: Optional[np.ndarray] = None,
    validation_mask: Optional[np.ndarray] = None,
    workers: int = 1,
) -> Tuple[Model, StepResult]:
    """One optimizer step whose update equals the full-graph step.

    Per-partition SSE gradients are summed in a fixed order and scaled by ``1 / (n_train * d)``, which
    turns them into the gradient of the full-graph mean squared error. Clipping and Adam follow.

    Args:
        partition_set: Partitions with halo depth at least the model's layer count.
        graph: Full graph.
        node_features: Features of all nodes.
        targets: Targets of all nodes, shape (n, output_width).
        model: Current model.
        opt_state: Optimizer state, advanced in place.
        train_mask: Nodes contributing to the loss. All nodes when omitted.
        validation_mask: Nodes whose error is only reported.
        workers: Threads running partitions.

    Returns:
        Tuple[Model, StepResult]: Updated model and step statistics.
    """
    terms = aggregate_loss_terms(
        partition_set, graph, node_features, targets, model, train_mask, validation_mask, workers
    )
    return _apply_update(terms, targets, model, opt_state, train_mask, validation_mask)


def full_graph_train_step(
    graph: Graph,
    node_features: np.ndarray,
    targets: np.ndarray,
    model: Model,
    opt_state: OptimizerState,
    train_mask: Optional[np.ndarray] = None,
    validation_mask: Optional[np.ndarray] = None,
) -> Tuple[Model, StepResult]:
    """Reference step on the whole graph."""
    terms = loss_terms(graph, node_features, targets, model, train_mask, validation_mask)
    if not np.isfinite(terms.sse):
        raise NonFiniteError(f"Loss is {terms.sse}")
    return _apply_update(terms, targets, model, opt_state, train_mask, validation_mask)


def mean_scale(targets: np.ndarray, mask: Optional[np.ndarray] = None) -> int:
    """Number of squared-error terms of the full-graph mean, ``n_train * d``."""
    rows = targets.shape[0] if mask is None else int(np.count_nonzero(mask))
    return max(rows, 1) * targets.shape[1]


def scaled_gradients(grads: Dict[str, np.ndarray], count: int) -> Dict[str, np.ndarray]:
    return {name: grad / count for name, grad in grads.items()}


def map_partitions(fn, partition_set: PartitionSet, workers: int = 1) -> List:
    """Applies ``fn`` to every partition, results in partition id order."""
    if workers <= 1:
        return [fn(partition) for partition in partition_set]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, partition_set))


def _apply_update(
    terms: LossTerms,
    targets: np.ndarray,
    model: Model,
    opt_state: OptimizerState,
    train_mask: Optional[np.ndarray],
    validation_mask: Optional[np.ndarray],
) -> Tuple[Model, StepResult]:
    targets = np.asarray(targets)
    count = mean_scale(targets, train_mask)
    grads = scaled_gradients(terms.grads, count)
    _, grad_norm = clip_by_global_norm(grads, None)

    validation_loss = float("nan")
    if validation_mask is not None and np.any(validation_mask):
        validation_loss = terms.validation_sse / mean_scale(targets, validation_mask)

    step = opt_state.step
    lr = cosine_lr(step, opt_state.config)
    params = adam_step(model.params, grads, opt_state)
    result = StepResult(
        step=step, loss=terms.sse / count, validation_loss=validation_loss, grad_norm=grad_norm, lr=lr
    )
    return model.with_params(params), result

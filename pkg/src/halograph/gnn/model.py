"""Encode-process-decode message passing network.

Every layer computes a message per edge from the receiver latent, the sender latent and the edge latent,
sums the messages per receiver and updates each node from its latent and the sum. All operations are
row-local or follow edges, so a node's output after L layers depends on its L-hop neighborhood only.
"""
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger

from ..diff import Tape, Tensor, add, concat_cols, gather_rows, gelu, layernorm, linear, scatter_sum, silu
from ..errors import SchemaError
from ..graph import EDGE_FEATURE_WIDTH, Graph

ACTIVATIONS = {"silu": silu, "gelu": gelu}
OUTPUT_NAMES = ("pressure", "wall_shear_x", "wall_shear_y", "wall_shear_z")


@dataclass
class ModelConfig:
    """Architecture of the network.

    Args:
        layer_count: Number of message passing layers L.
        hidden_dim: Width of node and edge latents and of MLP hidden layers.
        mlp_hidden_layers: Hidden layers per MLP.
        activation: "silu" or "gelu".
        node_input_width: Width of the node feature matrix.
        edge_input_width: Width of the edge feature matrix.
        output_width: Width of the prediction per node.
        residual: Add the update MLP output to the node latent instead of replacing it.
        update_edges: Carry the messages over as new edge latents (residually) instead of keeping the
            encoded edge latents fixed.
        layer_norm: Row-wise layer norm after the encoders and the processor MLPs.
    """

    layer_count: int = 15
    hidden_dim: int = 512
    mlp_hidden_layers: int = 2
    activation: str = "silu"
    node_input_width: int = 24
    edge_input_width: int = EDGE_FEATURE_WIDTH
    output_width: int = 4
    residual: bool = True
    update_edges: bool = False
    layer_norm: bool = True

    def __post_init__(self):
        if self.layer_count < 0:
            raise ValueError(f"layer_count must be non-negative but got {self.layer_count}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be positive but got {self.hidden_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {list(ACTIVATIONS)} but got {self.activation!r}")
        if self.layer_count == 0:
            logger.warning("layer_count=0: the model decodes encoder outputs without message passing")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class Model:
    """Model configuration plus named parameter arrays. Every layer owns distinct parameters."""

    config: ModelConfig
    params: Dict[str, np.ndarray] = field(default_factory=OrderedDict)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, dtype=np.float64) -> "Model":
        """Initializes weights from a normal distribution scaled by ``1 / sqrt(fan_in)``, biases at zero."""
        rng = np.random.default_rng(seed)
        params: Dict[str, np.ndarray] = OrderedDict()
        hidden = config.hidden_dim
        norm = config.layer_norm

        _init_mlp(params, rng, "node_encoder", config.node_input_width, hidden, config, norm)
        _init_mlp(params, rng, "edge_encoder", config.edge_input_width, hidden, config, norm)
        for layer in range(config.layer_count):
            _init_mlp(params, rng, f"processor.{layer}.message", 3 * hidden, hidden, config, norm)
            _init_mlp(params, rng, f"processor.{layer}.update", 2 * hidden, hidden, config, norm)
        _init_mlp(params, rng, "decoder", hidden, config.output_width, config, False)

        return cls(config=config, params=OrderedDict((k, v.astype(dtype)) for k, v in params.items()))

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype

    @property
    def num_parameters(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def with_params(self, params: Dict[str, np.ndarray]) -> "Model":
        return Model(config=self.config, params=OrderedDict((name, params[name]) for name in self.params))

    def astype(self, dtype) -> "Model":
        return Model(config=self.config, params=OrderedDict((k, v.astype(dtype)) for k, v in self.params.items()))

    def bind(self, tape: Tape) -> "BoundModel":
        """Registers every parameter on ``tape`` so a backward pass returns their gradients."""
        tensors = {name: tape.parameter(name, value) for name, value in self.params.items()}
        return BoundModel(self.config, tape, tensors)


@dataclass
class BoundModel:
    """Parameters of a model registered on one tape."""

    config: ModelConfig
    tape: Tape
    tensors: Dict[str, Tensor]

    def mlp(self, prefix: str, x: Tensor, norm: bool) -> Tensor:
        activation = ACTIVATIONS[self.config.activation]
        for i in range(self.config.mlp_hidden_layers + 1):
            x = linear(x, self.tensors[f"{prefix}.linear{i}.weight"], self.tensors[f"{prefix}.linear{i}.bias"])
            if i < self.config.mlp_hidden_layers:
                x = activation(x)
        if norm:
            x = layernorm(x, self.tensors[f"{prefix}.norm.gamma"], self.tensors[f"{prefix}.norm.beta"])
        return x


@dataclass
class Prediction:
    """Per-node outputs.

    Attributes:
        values: Output rows, shape (rows, output_width).
        node_ids: Global node id of every row.
        normalized: Whether ``values`` are still in normalized units.
    """

    values: np.ndarray
    node_ids: np.ndarray
    normalized: bool = True

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]


def encode(node_features: np.ndarray, edge_features: np.ndarray, bound: BoundModel) -> Tuple[Tensor, Tensor]:
    """Maps node and edge features to latents of width ``hidden_dim``."""
    config = bound.config
    if node_features.ndim != 2 or node_features.shape[1] != config.node_input_width:
        raise SchemaError(
            f"Node features must have width {config.node_input_width} but have shape {node_features.shape}"
        )
    if edge_features.ndim != 2 or edge_features.shape[1] != config.edge_input_width:
        raise SchemaError(
            f"Edge features must have width {config.edge_input_width} but have shape {edge_features.shape}"
        )
    tape = bound.tape
    h = bound.mlp("node_encoder", tape.constant(node_features), config.layer_norm)
    e = bound.mlp("edge_encoder", tape.constant(edge_features), config.layer_norm)
    return h, e


def process_layer(h: Tensor, e: Tensor, graph: Graph, layer: int, bound: BoundModel) -> Tuple[Tensor, Tensor]:
    """One message passing layer.

    ``m_ij = phi_m([h_i, h_j, e_ij])`` per edge ``j -> i``, ``m_i = sum_j m_ij``, and
    ``h_i' = h_i + phi_u([h_i, m_i])`` (without ``h_i +`` when the residual is off).

    Returns:
        Tuple[Tensor, Tensor]: New node latents and the edge latents for the next layer.
    """
    config = bound.config
    receivers = graph.receivers
    messages = bound.mlp(
        f"processor.{layer}.message",
        concat_cols([gather_rows(h, receivers), gather_rows(h, graph.senders), e]),
        config.layer_norm,
    )
    aggregated = scatter_sum(messages, receivers, graph.node_count)
    update = bound.mlp(f"processor.{layer}.update", concat_cols([h, aggregated]), config.layer_norm)

    h_next = add(h, update) if config.residual else update
    e_next = add(e, messages) if config.update_edges else e
    return h_next, e_next


def decode(h: Tensor, bound: BoundModel) -> Tensor:
    return bound.mlp("decoder", h, False)


def forward(graph: Graph, node_features: np.ndarray, bound: BoundModel) -> Tensor:
    """Records encode, all processor layers and decode on the bound model's tape."""
    h, e = encode(node_features, graph.edge_features, bound)
    for layer in range(bound.config.layer_count):
        h, e = process_layer(h, e, graph, layer, bound)
    return decode(h, bound)


def full_forward(graph: Graph, node_features: np.ndarray, model: Model) -> Prediction:
    """Runs the model on a whole graph, one output row per node."""
    tape = Tape(model.dtype)
    output = forward(graph, np.asarray(node_features, dtype=model.dtype), model.bind(tape))
    return Prediction(values=output.value, node_ids=np.arange(graph.node_count, dtype=np.int64))


def _init_mlp(
    params: Dict[str, np.ndarray],
    rng: np.random.Generator,
    prefix: str,
    in_width: int,
    out_width: int,
    config: ModelConfig,
    norm: bool,
) -> None:
    widths = [in_width] + [config.hidden_dim] * config.mlp_hidden_layers + [out_width]
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        params[f"{prefix}.linear{i}.weight"] = rng.normal(0.0, 1.0 / np.sqrt(max(fan_in, 1)), (fan_in, fan_out))
        params[f"{prefix}.linear{i}.bias"] = np.zeros(fan_out)
    if norm:
        params[f"{prefix}.norm.gamma"] = np.ones(out_width)
        params[f"{prefix}.norm.beta"] = np.zeros(out_width)

"""Pipeline configuration.

The configuration is a tree of dataclasses stored as JSON with an explicit ``schema_version``. Loading
rejects unknown keys and checks cross-field constraints before anything is computed.
"""
import dataclasses
import json
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

from .diff import OptimizerConfig
from .errors import ConfigError
from .gnn.model import ModelConfig
from .partition import METHODS
from .pointcloud import DEFAULT_FREQUENCIES
from .utils import resolve_dtype

SCHEMA_VERSION = 1
CONFIG_FILE_NAME = "config.json"


@dataclass
class SamplingConfig:
    """Geometry source, multi-scale point counts and node features.

    Args:
        geometry: STL path or ``synthetic:icosphere`` / ``synthetic:superellipsoid``.
        level_counts: Strictly increasing point counts, coarsest first.
        frequencies: Angular frequencies of the Fourier features.
        include_positions: Whether raw positions are part of the node features.
        reference_count: Dense reference samples of synthetic targets.
        idw_k: Neighbors of the target transfer.
        idw_power: Distance exponent of the target transfer.
    """

    geometry: str = "synthetic:icosphere"
    level_counts: Tuple[int, ...] = (500000, 1000000, 2000000)
    frequencies: Tuple[float, ...] = DEFAULT_FREQUENCIES
    include_positions: bool = True
    reference_count: int = 200000
    idw_k: int = 5
    idw_power: float = 1.0


@dataclass
class GraphConfig:
    k: int = 6
    symmetric: bool = True
    radius: Optional[float] = None


@dataclass
class PartitionConfig:
    """Training and inference partitioning.

    Args:
        partitions: Partition count for training.
        method: Partitioner name.
        halo_depth: Halo depth in hops. Defaults to the model's layer count.
        owner_file: Precomputed owner array (``<i4``) used by the ``external_assignment`` method.
        balance_edges: Balance local edge counts instead of node counts (``greedy_bfs`` only).
        inference_partitions: Partition count for inference.
    """

    partitions: int = 21
    method: str = "coordinate_bisection"
    halo_depth: Optional[int] = None
    owner_file: Optional[str] = None
    balance_edges: bool = False
    inference_partitions: int = 1


@dataclass
class TrainingConfig:
    validation_fraction: float = 0.0
    log_every_n_steps: int = 25
    checkpoint_every_n_steps: int = 0


@dataclass
class VerificationConfig:
    """Sizes of the equivalence suite run by ``verify``."""

    level_counts: Tuple[int, ...] = (500, 2000)
    layer_counts: Tuple[int, ...] = (3, 5)
    partition_counts: Tuple[int, ...] = (2, 4, 8)
    hidden_dim: int = 16
    training_steps: int = 50
    knn_instances: int = 100
    knn_max_points: int = 2000
    knn_max_k: int = 12
    stencil_stacks: int = 10
    halo_probes: int = 64


@dataclass
class PipelineConfig:
    schema_version: int = SCHEMA_VERSION
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    verification: VerificationConfig = field(default_factory=VerificationConfig)
    seed: int = 0
    workers: int = 1
    precision: str = "f32"
    output_dir: str = "runs"
    flow_axis: int = 0

    def __post_init__(self):
        if self.partition.halo_depth is None:
            self.partition.halo_depth = self.model.layer_count

    @property
    def halo_depth(self) -> int:
        return self.partition.halo_depth

    def validate(self) -> "PipelineConfig":
        """Checks cross-field constraints and raises ``ConfigError`` on the first violation."""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"Config schema version {self.schema_version} is not supported (expected {SCHEMA_VERSION})"
            )
        if self.partition.halo_depth < self.model.layer_count:
            raise ConfigError(
                f"Halo depth {self.partition.halo_depth} is smaller than the {self.model.layer_count} message "
                f"passing layers; partitioned outputs would differ from the full graph"
            )
        if self.partition.partitions < 1 or self.partition.inference_partitions < 1:
            raise ConfigError("Partition counts must be at least 1")
        if self.partition.method not in METHODS:
            raise ConfigError(f"Unknown partition method {self.partition.method!r}, expected one of {METHODS}")
        if self.partition.method == "external_assignment" and not self.partition.owner_file:
            raise ConfigError("Partition method 'external_assignment' needs partition.owner_file")
        counts = self.sampling.level_counts
        if not counts or counts[0] < 2 or any(b <= a for a, b in zip(counts, counts[1:])):
            raise ConfigError(
                f"Level counts must be at least 2 (a k-NN level needs a neighbor) and strictly increasing, "
                f"got {list(counts)}"
            )
        if self.graph.k < 1:
            raise ConfigError(f"k must be at least 1, got {self.graph.k}")
        if self.workers < 1:
            raise ConfigError(f"Worker count must be at least 1, got {self.workers}")
        if self.flow_axis not in (0, 1, 2):
            raise ConfigError(f"Flow axis must be 0, 1 or 2, got {self.flow_axis}")
        if not 0.0 <= self.training.validation_fraction < 1.0:
            raise ConfigError(f"Validation fraction must be in [0, 1), got {self.training.validation_fraction}")
        try:
            resolve_dtype(self.precision)
        except ValueError as error:
            raise ConfigError(str(error)) from error
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if "schema_version" not in data:
            raise ConfigError("Config is missing 'schema_version'")
        return _build(cls, data, "config").validate()

    def with_overrides(
        self,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        precision: Optional[str] = None,
        partitions: Optional[int] = None,
        output_dir: Optional[str] = None,
    ) -> "PipelineConfig":
        """Copy with command-line overrides applied."""
        data = self.to_dict()
        if seed is not None:
            data["seed"] = seed
        if workers is not None:
            data["workers"] = workers
        if precision is not None:
            data["precision"] = precision
        if partitions is not None:
            data["partition"]["partitions"] = partitions
        if output_dir is not None:
            data["output_dir"] = output_dir
        return PipelineConfig.from_dict(data)

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        if path.is_dir():
            path = path / CONFIG_FILE_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """Loads a JSON config file, or returns the defaults when ``path`` is ``None``."""
    if path is None:
        return PipelineConfig().validate()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise ConfigError(f"Config file {path} is not valid JSON: {error}") from error
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object")
    return PipelineConfig.from_dict(data)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {unknown}")

    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{where}.{name}")
        elif typing.get_origin(hint) is tuple and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as error:
        if isinstance(error, ConfigError):
            raise
        raise ConfigError(f"Invalid {where}: {error}") from error

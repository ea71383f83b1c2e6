from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

from loguru import logger

from ..bundles import read_bundle, write_bundle
from ..diff import OptimizerConfig, OptimizerState
from ..pointcloud import FeatureSchema, NormStats, apply_norm
from .model import Model, ModelConfig

PARAM_PREFIX = "param."
FIRST_MOMENT_PREFIX = "adam_m."
SECOND_MOMENT_PREFIX = "adam_v."


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference.

    Attributes:
        model: Model configuration and parameters.
        feature_schema: Columns of the node feature matrix the model was trained on.
        frequencies: Fourier frequencies of the feature matrix.
        input_stats: Normalization of the node features.
        target_stats: Normalization of the targets, used to denormalize predictions.
        optimizer: Optimizer moments and step, absent for inference-only checkpoints.
        upstream_checksum: Checksum of the partition bundle trained on.
    """

    model: Model
    feature_schema: FeatureSchema
    frequencies: Tuple[float, ...]
    input_stats: NormStats
    target_stats: NormStats
    optimizer: Optional[OptimizerState] = None
    upstream_checksum: Optional[str] = None

    @property
    def step(self) -> int:
        return self.optimizer.step if self.optimizer is not None else 0

    def save(self, path: Union[str, Path]) -> str:
        arrays = {f"{PARAM_PREFIX}{name}": value for name, value in self.model.params.items()}
        metadata = {
            "model_config": self.model.config.to_dict(),
            "param_names": list(self.model.params),
            "feature_schema": self.feature_schema.to_list(),
            "frequencies": [float(f) for f in self.frequencies],
            "input_stats": self.input_stats.to_dict(),
            "target_stats": self.target_stats.to_dict(),
            "optimizer": None,
        }
        if self.optimizer is not None:
            metadata["optimizer"] = {"config": asdict(self.optimizer.config), "step": self.optimizer.step}
            for name in self.model.params:
                arrays[f"{FIRST_MOMENT_PREFIX}{name}"] = self.optimizer.first_moment[name]
                arrays[f"{SECOND_MOMENT_PREFIX}{name}"] = self.optimizer.second_moment[name]

        checksum = write_bundle(path, "checkpoint", arrays, metadata, self.upstream_checksum)
        logger.info("Saved checkpoint at step {} to {}", self.step, path)
        return checksum

    @classmethod
    def load(cls, path: Union[str, Path], upstream: Optional[Union[str, Path]] = None) -> "Checkpoint":
        bundle = read_bundle(path, "checkpoint", upstream)
        meta = bundle.metadata
        names = meta["param_names"]
        params = {name: bundle.arrays[f"{PARAM_PREFIX}{name}"] for name in names}
        model = Model(config=ModelConfig.from_dict(meta["model_config"]), params=params)

        optimizer = None
        if meta.get("optimizer") is not None:
            optimizer = OptimizerState(
                config=OptimizerConfig(**meta["optimizer"]["config"]),
                step=int(meta["optimizer"]["step"]),
                first_moment={name: bundle.arrays[f"{FIRST_MOMENT_PREFIX}{name}"] for name in names},
                second_moment={name: bundle.arrays[f"{SECOND_MOMENT_PREFIX}{name}"] for name in names},
            )
        return cls(
            model=model,
            feature_schema=FeatureSchema.from_list(meta["feature_schema"]),
            frequencies=tuple(meta["frequencies"]),
            input_stats=NormStats.from_dict(meta["input_stats"]),
            target_stats=NormStats.from_dict(meta["target_stats"]),
            optimizer=optimizer,
            upstream_checksum=bundle.upstream_checksum,
        )

    def prepare_features(self, features, schema: FeatureSchema):
        """Checks ``schema`` against the trained schema and applies the input normalization."""
        self.feature_schema.check(schema)
        return apply_norm(features, self.input_stats)

__all__ = [
    "ACTIVATIONS",
    "OUTPUT_NAMES",
    "ModelConfig",
    "Model",
    "BoundModel",
    "Prediction",
    "encode",
    "process_layer",
    "decode",
    "forward",
    "full_forward",
    "LossTerms",
    "StepResult",
    "check_halo_depth",
    "partition_forward",
    "local_forward",
    "gather_predictions",
    "loss_terms",
    "partition_loss_terms",
    "aggregate_loss_terms",
    "partitioned_train_step",
    "full_graph_train_step",
    "mean_scale",
    "scaled_gradients",
    "map_partitions",
    "Checkpoint",
    "PartitionedTrainer",
    "TrainingResult",
    "LOSS_LOG_COLUMNS",
    "validation_split",
    "InferenceResult",
    "infer",
    "integrate_force",
    "relative_l2_error",
    "relative_errors_by_name",
    "r2_score",
]

from .model import (
    ACTIVATIONS,
    OUTPUT_NAMES,
    ModelConfig,
    Model,
    BoundModel,
    Prediction,
    encode,
    process_layer,
    decode,
    forward,
    full_forward,
)
from .partitioned import (
    LossTerms,
    StepResult,
    check_halo_depth,
    partition_forward,
    local_forward,
    gather_predictions,
    loss_terms,
    partition_loss_terms,
    aggregate_loss_terms,
    partitioned_train_step,
    full_graph_train_step,
    mean_scale,
    scaled_gradients,
    map_partitions,
)
from .checkpoint import Checkpoint
from .trainer import PartitionedTrainer, TrainingResult, LOSS_LOG_COLUMNS, validation_split
from .inference import InferenceResult, infer, integrate_force
from .metrics import relative_l2_error, relative_errors_by_name, r2_score

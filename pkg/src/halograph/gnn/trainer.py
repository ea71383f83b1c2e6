from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
from datasets import Dataset
from loguru import logger
from tqdm import tqdm

from ..diff import OptimizerConfig, OptimizerState
from ..graph import Graph
from ..partition import PartitionSet
from ..utils import create_timestamp_path, log_dir
from .model import Model
from .partitioned import check_halo_depth, partitioned_train_step

LOSS_LOG_COLUMNS = ("step", "lr", "train_loss", "validation_loss", "grad_norm")

CheckpointCallback = Callable[[Model, OptimizerState], None]


@dataclass
class TrainingResult:
    """Final model, optimizer state and the per-step loss log."""

    model: Model
    optimizer: OptimizerState
    loss_log: Dataset
    loss_log_path: Optional[Path] = None


def validation_split(num_nodes: int, fraction: float, seed: int = 0) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Random node-level split into training and validation masks.

    Returns:
        Tuple: Training mask and validation mask, the latter ``None`` when ``fraction`` is 0.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"Validation fraction must be in [0, 1) but got {fraction}")
    count = int(np.floor(fraction * num_nodes))
    if count == 0:
        return np.ones(num_nodes, dtype=bool), None
    validation = np.zeros(num_nodes, dtype=bool)
    validation[np.random.default_rng(seed).permutation(num_nodes)[:count]] = True
    return ~validation, validation


class PartitionedTrainer:
    """Runs partitioned training steps and records a loss log.

    Every step runs all partitions, reduces their gradients in partition order and takes one optimizer
    step, so the trajectory is the one of full-graph training regardless of the partition count.
    """

    def __init__(
        self,
        model: Model,
        optimizer_config: OptimizerConfig,
        workers: int = 1,
        optimizer: Optional[OptimizerState] = None,
    ):
        """Initialize the trainer.

        Args:
            model (Model): Model to train.
            optimizer_config (OptimizerConfig): Adam, schedule and clipping settings.
            workers (int, optional): Threads running partitions concurrently. Defaults to 1.
            optimizer (Optional[OptimizerState], optional): State to resume from. Defaults to a fresh state.
        """
        self.model = model
        self.optimizer = optimizer or OptimizerState.create(model.params, optimizer_config)
        self.workers = workers
        self._base_log_dir = log_dir()

    def _setup_log(self, output_dir: Optional[Union[str, Path]]) -> Path:
        """Loss log location. Current format: <timestamp>_loss_log.csv below the log directory."""
        if output_dir is not None:
            log_file = Path(output_dir) / "loss_log.csv"
        else:
            log_file = Path(f"{create_timestamp_path(self._base_log_dir)}_loss_log.csv")
        log_file.parent.mkdir(parents=True, exist_ok=True)
        return log_file

    def train(
        self,
        partition_set: PartitionSet,
        graph: Graph,
        node_features: np.ndarray,
        targets: np.ndarray,
        num_steps: Optional[int] = None,
        train_mask: Optional[np.ndarray] = None,
        validation_mask: Optional[np.ndarray] = None,
        output_dir: Optional[Union[str, Path]] = None,
        log_every_n_steps: int = 25,
        checkpoint_every_n_steps: int = 0,
        on_checkpoint: Optional[CheckpointCallback] = None,
        show_progress: bool = True,
    ) -> TrainingResult:
        """Trains for ``num_steps`` optimizer steps.

        Args:
            partition_set (PartitionSet): Partitions with a halo at least as deep as the model.
            graph (Graph): Full graph.
            node_features (np.ndarray): Normalized node features of all nodes.
            targets (np.ndarray): Normalized targets of all nodes.
            num_steps (Optional[int], optional): Steps to run. Defaults to the rest of the learning rate schedule.
            train_mask (Optional[np.ndarray], optional): Nodes in the loss. Defaults to all nodes.
            validation_mask (Optional[np.ndarray], optional): Nodes only reported as validation loss.
            output_dir (Optional[Union[str, Path]], optional): Where to write the loss log. Defaults to a
                timestamped file below the log directory.
            log_every_n_steps (int, optional): Log the loss every n steps. Defaults to 25.
            checkpoint_every_n_steps (int, optional): Call ``on_checkpoint`` every n steps. 0 disables
                intermediate checkpoints. Defaults to 0.
            on_checkpoint (Optional[CheckpointCallback], optional): Called with the model and optimizer state
                at every checkpoint and after the last step.
            show_progress (bool, optional): Show a progress bar. Defaults to True.

        Returns:
            TrainingResult: Final model, optimizer state and loss log.
        """
        for partition in partition_set:
            check_halo_depth(partition, self.model)

        remaining = self.optimizer.config.total_steps - self.optimizer.step
        num_steps = remaining if num_steps is None else num_steps
        if num_steps > remaining:
            raise ValueError(
                f"Cannot run {num_steps} steps: the schedule has {remaining} of "
                f"{self.optimizer.config.total_steps} steps left"
            )

        log_file = self._setup_log(output_dir)
        loss_log = defaultdict(list)
        logger.info(
            "Training {} parameters on {} partitions for {} steps",
            self.model.num_parameters,
            partition_set.num_partitions,
            num_steps,
        )

        for step_idx in tqdm(range(1, num_steps + 1), desc="Training", disable=not show_progress):
            self.model, result = partitioned_train_step(
                partition_set,
                graph,
                node_features,
                targets,
                self.model,
                self.optimizer,
                train_mask=train_mask,
                validation_mask=validation_mask,
                workers=self.workers,
            )
            loss_log["step"].append(result.step)
            loss_log["lr"].append(result.lr)
            loss_log["train_loss"].append(result.loss)
            loss_log["validation_loss"].append(result.validation_loss)
            loss_log["grad_norm"].append(result.grad_norm)

            if log_every_n_steps > 0 and step_idx % log_every_n_steps == 0:
                logger.info(
                    "Step {}: train loss {:.6e}, validation loss {:.6e}, lr {:.3e}",
                    result.step,
                    result.loss,
                    result.validation_loss,
                    result.lr,
                )

            if on_checkpoint and checkpoint_every_n_steps > 0 and step_idx % checkpoint_every_n_steps == 0:
                on_checkpoint(self.model, self.optimizer)

        if on_checkpoint:
            on_checkpoint(self.model, self.optimizer)

        dataset = Dataset.from_dict({column: loss_log[column] for column in LOSS_LOG_COLUMNS})
        dataset.to_csv(str(log_file))
        logger.info("Wrote loss log with {} steps to {}", len(dataset), log_file)
        return TrainingResult(model=self.model, optimizer=self.optimizer, loss_log=dataset, loss_log_path=log_file)

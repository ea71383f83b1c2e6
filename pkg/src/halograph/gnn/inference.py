from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

import numpy as np
from loguru import logger

from ..errors import HaloDepthError, SchemaError
from ..geometry import TriangleSoup
from ..graph import build_multiscale_graph
from ..partition import BalanceReport, balance_report, expand_halo, partition_nodes
from ..pointcloud import MultiScalePointCloud, invert_norm, multiscale_sample, surface_features, surface_schema
from ..synthetic import load_geometry
from ..utils import resolve_dtype
from .checkpoint import Checkpoint
from .model import Prediction
from .partitioned import gather_predictions

if TYPE_CHECKING:
    from ..config import PipelineConfig


@dataclass
class InferenceResult:
    """Denormalized predictions on every finest-level point.

    Attributes:
        cloud: Sampled point cloud; prediction row ``i`` belongs to point ``i``.
        prediction: Physical-unit outputs.
        total_area: Surface area of the geometry.
        force: Integrated force along the flow axis.
        balance: Partition statistics of the inference run.
    """

    cloud: MultiScalePointCloud
    prediction: Prediction
    total_area: float
    force: float
    balance: BalanceReport


def integrate_force(values: np.ndarray, normals: np.ndarray, total_area: float, flow_axis: int = 0) -> float:
    """Force along ``flow_axis`` from pressure and wall shear on uniform surface samples.

    ``F = sum_i (p_i n_i[axis] + tau_i[axis]) a_i`` with the equal quadrature weight ``a_i = total_area / n``.

    Args:
        values: Denormalized outputs, columns pressure then three wall shear components.
        normals: Unit normals of the samples.
        total_area: Surface area the samples were drawn from.
        flow_axis: Axis of the force component.

    Returns:
        float: The force component.
    """
    values = np.asarray(values, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if values.shape[0] != normals.shape[0]:
        raise ValueError(f"Got {values.shape[0]} predictions for {normals.shape[0]} normals")
    if not len(values):
        return 0.0
    pressure = values[:, 0]
    shear = values[:, 1 + flow_axis]
    weight = total_area / len(values)
    return float(np.sum(pressure * normals[:, flow_axis] + shear) * weight)


def infer(
    geometry: Union[str, TriangleSoup],
    checkpoint: Checkpoint,
    config: "PipelineConfig",
    workers: Optional[int] = None,
) -> InferenceResult:
    """Predicts surface fields for a geometry.

    Samples the multi-scale cloud, builds the graph, partitions it into ``inference_partitions`` parts,
    runs every partition, keeps owned rows by global id and denormalizes with the stored target
    statistics. Schema and halo depth are checked before any sampling.

    Args:
        geometry: STL path, synthetic source or an already loaded soup.
        checkpoint: Trained model with feature schema and normalization.
        config: Pipeline configuration for sampling, graph and partitioning.
        workers: Threads running partitions. Defaults to ``config.workers``.

    Returns:
        InferenceResult: Predictions, the sampled cloud and the force summary.
    """
    sampling = config.sampling
    checkpoint.feature_schema.check(surface_schema(len(sampling.frequencies), sampling.include_positions))
    if not np.allclose(checkpoint.frequencies, sampling.frequencies, rtol=0.0, atol=0.0):
        raise SchemaError(
            f"Checkpoint was trained with Fourier frequencies {list(checkpoint.frequencies)}, "
            f"config has {list(sampling.frequencies)}"
        )
    layer_count = checkpoint.model.config.layer_count
    if config.partition.halo_depth < layer_count:
        raise HaloDepthError(
            f"Halo depth {config.partition.halo_depth} is smaller than the checkpoint's {layer_count} layers"
        )

    if isinstance(geometry, TriangleSoup):
        soup = geometry
    else:
        soup, _ = load_geometry(geometry)

    cloud = multiscale_sample(soup, sampling.level_counts, config.seed)
    features = surface_features(cloud.positions, cloud.normals, sampling.frequencies, sampling.include_positions)
    inputs = checkpoint.prepare_features(features.values, features.schema)

    graph_config = config.graph
    graph = build_multiscale_graph(cloud, graph_config.k, graph_config.symmetric, graph_config.radius)
    owner = partition_nodes(
        graph,
        config.partition.inference_partitions,
        method=config.partition.method,
        owner_file=config.partition.owner_file,
        balance_edges=config.partition.balance_edges,
    )
    workers = config.workers if workers is None else workers
    partition_set = expand_halo(
        graph,
        owner,
        config.partition.halo_depth,
        num_partitions=config.partition.inference_partitions,
        method=config.partition.method,
        workers=workers,
    )
    report = balance_report(partition_set)

    model = checkpoint.model.astype(resolve_dtype(config.precision))
    normalized = gather_predictions(partition_set, graph, inputs, model, workers=workers)
    values = invert_norm(normalized.values, checkpoint.target_stats)
    prediction = Prediction(values=values, node_ids=normalized.node_ids, normalized=False)

    force = integrate_force(values, cloud.normals, soup.total_area, config.flow_axis)
    logger.info(
        "Predicted {} points on {} partitions, force {:.6e}", len(values), partition_set.num_partitions, force
    )
    return InferenceResult(
        cloud=cloud, prediction=prediction, total_area=soup.total_area, force=force, balance=report
    )

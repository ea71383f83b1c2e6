"""Command line entry point.

Every command reads the pipeline config, applies the flag overrides and works inside the output
directory::

    <out>/config.json
    <out>/pointcloud/    sample
    <out>/graph/         build-graph
    <out>/partition/     partition
    <out>/checkpoint/    train (plus <out>/loss_log.csv)
    <out>/prediction/    infer

Exit codes: 0 on success, 1 when verification fails, 2 on input or configuration errors.
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from loguru import logger

from . import __version__
from .bundles import (
    MANIFEST_NAME,
    Bundle,
    bundle_checksum,
    check_source,
    graph_feature_schema,
    load_graph,
    load_partition,
    load_pointcloud,
    read_manifest,
    save_graph,
    save_partition,
    save_pointcloud,
    save_prediction,
)
from .config import CONFIG_FILE_NAME, PipelineConfig, load_config
from .errors import SchemaError
from .gnn import (
    OUTPUT_NAMES,
    Checkpoint,
    Model,
    PartitionedTrainer,
    infer,
    relative_errors_by_name,
    validation_split,
)
from .graph import build_multiscale_graph
from .partition import balance_report, expand_halo, partition_nodes
from .pointcloud import apply_norm, fit_norm, multiscale_sample, surface_features, surface_schema
from .synthetic import SYNTHETIC_PREFIX, analytic_targets, geometry_digest, load_geometry, transfer_targets
from .utils import resolve_dtype
from .verification import run_verification

POINTCLOUD_DIR = "pointcloud"
GRAPH_DIR = "graph"
PARTITION_DIR = "partition"
CHECKPOINT_DIR = "checkpoint"
PREDICTION_DIR = "prediction"
BUNDLE_DIRS = (POINTCLOUD_DIR, GRAPH_DIR, PARTITION_DIR, CHECKPOINT_DIR, PREDICTION_DIR)


def check_geometry(cloud_bundle: Bundle, config: PipelineConfig) -> None:
    """Refuses a point cloud sampled from another geometry than the configured one."""
    source = config.sampling.geometry
    check_source(cloud_bundle, source, geometry_digest(source))


def cmd_sample(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    sampling = config.sampling
    soup, digest = load_geometry(sampling.geometry)
    cloud = multiscale_sample(soup, sampling.level_counts, config.seed)
    targets = None
    if sampling.geometry.startswith(SYNTHETIC_PREFIX):
        targets = transfer_targets(
            soup, cloud, sampling.reference_count, config.seed, k=sampling.idw_k, power=sampling.idw_power
        )
    save_pointcloud(
        out / POINTCLOUD_DIR, cloud, soup.total_area, digest, targets, metadata={"geometry": sampling.geometry}
    )
    return 0


def cmd_build_graph(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    cloud, _, cloud_bundle = load_pointcloud(out / POINTCLOUD_DIR)
    check_geometry(cloud_bundle, config)
    graph = build_multiscale_graph(cloud, config.graph.k, config.graph.symmetric, config.graph.radius)
    schema = surface_schema(len(config.sampling.frequencies), config.sampling.include_positions)
    save_graph(out / GRAPH_DIR, graph, upstream_checksum=cloud_bundle.checksum, feature_schema=schema)
    return 0


def cmd_partition(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    graph, graph_bundle = load_graph(out / GRAPH_DIR, upstream=out / POINTCLOUD_DIR)
    settings = config.partition
    owner = partition_nodes(
        graph,
        settings.partitions,
        settings.method,
        owner_file=settings.owner_file,
        balance_edges=settings.balance_edges,
    )
    partition_set = expand_halo(
        graph,
        owner,
        settings.halo_depth,
        num_partitions=settings.partitions,
        method=settings.method,
        workers=config.workers,
        graph_checksum=graph_bundle.checksum,
    )
    report = balance_report(partition_set)
    logger.info("Partition balance: {}", json.dumps(report.to_dict()))
    save_partition(out / PARTITION_DIR, partition_set, report)
    return 0


def cmd_train(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    cloud, targets, cloud_bundle = load_pointcloud(out / POINTCLOUD_DIR)
    check_geometry(cloud_bundle, config)
    if targets is None:
        raise SchemaError(f"Point cloud bundle {out / POINTCLOUD_DIR} has no targets to train on")
    graph, graph_bundle = load_graph(out / GRAPH_DIR, upstream=out / POINTCLOUD_DIR)
    partition_set, partition_bundle = load_partition(out / PARTITION_DIR, upstream=out / GRAPH_DIR)

    sampling = config.sampling
    features = surface_features(cloud.positions, cloud.normals, sampling.frequencies, sampling.include_positions)
    graph_schema = graph_feature_schema(graph_bundle)
    if graph_schema is not None:
        graph_schema.check(features.schema)
    if config.model.node_input_width != features.schema.width:
        raise SchemaError(
            f"Model expects {config.model.node_input_width} input columns but the feature schema "
            f"{features.schema.to_list()} has {features.schema.width}"
        )
    input_stats = fit_norm(features.values)
    target_stats = fit_norm(targets, list(OUTPUT_NAMES))
    train_mask, validation_mask = validation_split(
        graph.node_count, config.training.validation_fraction, seed=config.seed
    )

    model = Model.init(config.model, seed=config.seed, dtype=resolve_dtype(config.precision))
    checkpoint_dir = out / CHECKPOINT_DIR

    def save_checkpoint(model, optimizer):
        Checkpoint(
            model=model,
            feature_schema=features.schema,
            frequencies=tuple(sampling.frequencies),
            input_stats=input_stats,
            target_stats=target_stats,
            optimizer=optimizer,
            upstream_checksum=partition_bundle.checksum,
        ).save(checkpoint_dir)

    trainer = PartitionedTrainer(model, config.optimizer, workers=config.workers)
    result = trainer.train(
        partition_set,
        graph,
        apply_norm(features.values, input_stats),
        apply_norm(targets, target_stats),
        train_mask=train_mask,
        validation_mask=validation_mask,
        output_dir=out,
        log_every_n_steps=config.training.log_every_n_steps,
        checkpoint_every_n_steps=config.training.checkpoint_every_n_steps,
        on_checkpoint=save_checkpoint,
        show_progress=not args.quiet,
    )
    steps = len(result.loss_log)
    if steps:
        first, last = result.loss_log[0]["train_loss"], result.loss_log[steps - 1]["train_loss"]
        logger.info("Training loss went from {:.6e} to {:.6e}", first, last)
    return 0


def cmd_infer(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    checkpoint_dir = out / CHECKPOINT_DIR
    partition_dir = out / PARTITION_DIR
    if (partition_dir / MANIFEST_NAME).exists():
        checkpoint = Checkpoint.load(checkpoint_dir, upstream=partition_dir)
    else:
        logger.warning("No partition bundle at {}; cannot check the checkpoint for staleness", partition_dir)
        checkpoint = Checkpoint.load(checkpoint_dir)
    geometry = args.geometry or config.sampling.geometry
    if args.partitions is not None:
        config = replace(config, partition=replace(config.partition, inference_partitions=args.partitions))

    result = infer(geometry, checkpoint, config)
    metadata = {
        "geometry": geometry,
        "force": result.force,
        "flow_axis": config.flow_axis,
        "total_area": result.total_area,
        "balance": result.balance.to_dict(),
    }
    if geometry.startswith(SYNTHETIC_PREFIX):
        reference = analytic_targets(result.cloud.positions, result.cloud.normals)
        errors = relative_errors_by_name(result.prediction.values, reference)
        metadata["relative_l2_error"] = errors
        for name, error in errors.items():
            logger.info("Relative L2 error of {}: {:.4f}", name, error)

    save_prediction(
        out / PREDICTION_DIR,
        result.cloud.positions,
        result.prediction.values,
        OUTPUT_NAMES,
        metadata=metadata,
        upstream_checksum=bundle_checksum(checkpoint_dir),
    )
    print(f"force along axis {config.flow_axis}: {result.force:.6e} (surface area {result.total_area:.6e})")
    return 0


def cmd_verify(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    report = run_verification(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verification.json").write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(report.summary())
    if not report.passed:
        logger.error("Verification failed: {}", ", ".join(check.name for check in report.failures))
        return 1
    return 0


def cmd_stats(config: PipelineConfig, out: Path, args: argparse.Namespace) -> int:
    paths = [Path(path) for path in args.bundles] or [out / name for name in BUNDLE_DIRS]
    found = 0
    for path in paths:
        if not (path / MANIFEST_NAME).exists():
            continue
        found += 1
        print(format_manifest(path, read_manifest(path)))
    if not found:
        raise FileNotFoundError(f"No bundles found in {', '.join(str(path) for path in paths)}")
    return 0


def format_manifest(path: Path, manifest: dict) -> str:
    lines = [
        f"== {manifest['kind']} bundle at {path}",
        f"   checksum:          {manifest['checksum']}",
        f"   upstream checksum: {manifest.get('upstream_checksum')}",
    ]
    arrays = manifest["arrays"]
    total = 0
    for name in sorted(arrays):
        entry = arrays[name]
        nbytes = int(np.prod(entry["shape"], dtype=np.int64)) * np.dtype(entry["dtype"]).itemsize
        total += nbytes
        if len(arrays) <= 16:
            lines.append(f"   {name:<28} {entry['dtype']:<5} {str(tuple(entry['shape'])):<20} {nbytes} bytes")
    lines.append(f"   {len(arrays)} arrays, {total} bytes")
    for key, value in sorted(manifest["metadata"].items()):
        lines.append(f"   {key}: {json.dumps(value)}")
    return "\n".join(lines)


COMMANDS = {
    "sample": cmd_sample,
    "build-graph": cmd_build_graph,
    "partition": cmd_partition,
    "train": cmd_train,
    "infer": cmd_infer,
    "verify": cmd_verify,
    "stats": cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halograph", description="Halo-partitioned multi-scale graph networks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", type=str, default=None, help="JSON pipeline config")
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--workers", type=int, default=None)
        sub.add_argument("--precision", type=str, choices=["f32", "f64"], default=None)
        sub.add_argument("--partitions", type=int, default=None, help="Partition count override")
        sub.add_argument("--out", type=str, default=None, help="Output directory")
        sub.add_argument("--quiet", action="store_true", help="Hide progress bars")
        if name == "infer":
            sub.add_argument("--geometry", type=str, default=None, help="STL path or synthetic source")
        if name == "stats":
            sub.add_argument("bundles", nargs="*", help="Bundle directories, defaults to all bundles in --out")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        # Inference has its own partition count; --partitions is applied there.
        config = config.with_overrides(
            seed=args.seed,
            workers=args.workers,
            precision=args.precision,
            partitions=None if args.command == "infer" else args.partitions,
            output_dir=args.out,
        )
        out = Path(config.output_dir)
        if args.command not in ("verify", "stats"):
            config.save(out / CONFIG_FILE_NAME)
        return COMMANDS[args.command](config, out, args)
    except (ValueError, FileNotFoundError) as error:
        logger.error("{}: {}", type(error).__name__, error)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Equivalence suite.

Checks that partitioned execution reproduces full-graph execution (forward, gradients, training
trajectories), that a too-shallow halo is detected, and the supporting oracles: exact k-NN, stencil halos,
the divergence operator and randomized halo probes.
"""
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from .config import PipelineConfig, VerificationConfig
from .diff import OptimizerConfig, OptimizerState
from .geometry import ScalarGrid, icosphere
from .gnn import (
    OUTPUT_NAMES,
    Model,
    ModelConfig,
    aggregate_loss_terms,
    full_forward,
    full_graph_train_step,
    gather_predictions,
    local_forward,
    loss_terms,
    partitioned_train_step,
)
from .graph import Graph, build_multiscale_graph, knn_edges, knn_edges_bruteforce
from .partition import PartitionSet, check_halo_sufficiency, expand_halo, partition_nodes
from .pointcloud import apply_norm, fit_norm, multiscale_sample, surface_features
from .stencil import StencilStack, divergence_central, empirical_min_halo, grid_partition, receptive_radius, \
    stencil_forward
from .synthetic import analytic_targets

FORWARD_TOLERANCE = {"f64": 1e-10, "f32": 1e-5}
GRADIENT_TOLERANCE = 1e-9
TRAJECTORY_TOLERANCE = 1e-7
NEGATIVE_CONTROL_THRESHOLD = 1e-6
DIVERGENCE_TOLERANCE = 1e-10


@dataclass
class CheckResult:
    """Outcome of one check: a measured value against a tolerance."""

    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def add(self, name: str, passed: bool, value: float, tolerance: float, detail: str = "") -> CheckResult:
        check = CheckResult(name, bool(passed), float(value), float(tolerance), detail)
        self.checks.append(check)
        log = logger.info if check.passed else logger.error
        log("{} {}: {:.3e} (tolerance {:.1e}) {}", "PASS" if check.passed else "FAIL", name, value, tolerance, detail)
        return check

    def max_value(self, prefix: str) -> float:
        values = [check.value for check in self.checks if check.name.startswith(prefix)]
        return max(values) if values else 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_forward_deviation": self.max_value("forward"),
            "max_gradient_deviation": self.max_value("gradient"),
            "checks": [asdict(check) for check in self.checks],
        }

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status}  {c.name:<48} {c.value:.3e}  (tol {c.tolerance:.1e})")
        lines.append(f"max forward deviation:  {self.max_value('forward'):.3e}")
        lines.append(f"max gradient deviation: {self.max_value('gradient'):.3e}")
        lines.append("verification " + ("passed" if self.passed else f"FAILED ({len(self.failures)} checks)"))
        return "\n".join(lines)


@dataclass
class VerificationCase:
    """Random multi-scale graph with features, normalized targets and a model."""

    graph: Graph
    features: np.ndarray
    targets: np.ndarray
    model: Model


def random_case(
    level_counts: Tuple[int, ...], layer_count: int, hidden_dim: int, seed: int = 0, k: int = 6
) -> VerificationCase:
    cloud = multiscale_sample(icosphere(subdivisions=3), level_counts, seed)
    graph = build_multiscale_graph(cloud, k=k)
    features = surface_features(cloud.positions, cloud.normals)
    targets = analytic_targets(cloud.positions, cloud.normals)
    targets = apply_norm(targets, fit_norm(targets, list(OUTPUT_NAMES)))
    config = ModelConfig(
        layer_count=layer_count, hidden_dim=hidden_dim, node_input_width=features.schema.width
    )
    model = Model.init(config, seed=seed, dtype=np.float64)
    return VerificationCase(graph=graph, features=features.values, targets=targets, model=model)


def partition_case(case: VerificationCase, num_partitions: int, halo_depth: int, workers: int = 1) -> PartitionSet:
    owner = partition_nodes(case.graph, num_partitions)
    return expand_halo(
        case.graph, owner, halo_depth, num_partitions=num_partitions, method="coordinate_bisection", workers=workers
    )


def forward_deviation(
    case: VerificationCase, partition_set: PartitionSet, dtype=np.float64, workers: int = 1
) -> float:
    model = case.model.astype(dtype)
    full = full_forward(case.graph, case.features, model).values
    partitioned = gather_predictions(partition_set, case.graph, case.features, model, workers).values
    return float(np.max(np.abs(partitioned.astype(np.float64) - full.astype(np.float64))))


def relative_deviation(actual: Dict[str, np.ndarray], expected: Dict[str, np.ndarray]) -> float:
    """``max |actual - expected| / max |expected|`` over all entries of all arrays."""
    scale = max(float(np.max(np.abs(value), initial=0.0)) for value in expected.values())
    worst = max(float(np.max(np.abs(actual[name] - value), initial=0.0)) for name, value in expected.items())
    return worst / max(scale, np.finfo(np.float64).tiny)


def gradient_deviation(case: VerificationCase, partition_set: PartitionSet, workers: int = 1) -> Tuple[float, float]:
    """Relative deviation of aggregated gradients and of the summed loss from the full graph."""
    full = loss_terms(case.graph, case.features, case.targets, case.model)
    parts = aggregate_loss_terms(partition_set, case.graph, case.features, case.targets, case.model, workers=workers)
    loss_error = abs(parts.sse - full.sse) / max(abs(full.sse), np.finfo(np.float64).tiny)
    return relative_deviation(parts.grads, full.grads), loss_error


def trajectory_deviation(
    case: VerificationCase, partition_set: PartitionSet, steps: int, workers: int = 1, show_progress: bool = False
) -> Tuple[float, float]:
    """Runs ``steps`` full-graph and partitioned steps side by side.

    Returns:
        Tuple[float, float]: Largest relative parameter deviation and largest relative loss deviation.
    """
    optimizer_config = OptimizerConfig(total_steps=steps)
    full_model, part_model = case.model, case.model
    full_state = OptimizerState.create(full_model.params, optimizer_config)
    part_state = OptimizerState.create(part_model.params, optimizer_config)
    worst_params, worst_loss = 0.0, 0.0
    for _ in tqdm(range(steps), desc="Trajectory check", disable=not show_progress):
        full_model, full_step = full_graph_train_step(case.graph, case.features, case.targets, full_model, full_state)
        part_model, part_step = partitioned_train_step(
            partition_set, case.graph, case.features, case.targets, part_model, part_state, workers=workers
        )
        worst_params = max(worst_params, relative_deviation(part_model.params, full_model.params))
        worst_loss = max(worst_loss, abs(part_step.loss - full_step.loss) / max(abs(full_step.loss), 1e-300))
    return worst_params, worst_loss


def negative_control(case: VerificationCase, num_partitions: int) -> Tuple[float, int]:
    """Forward deviation and number of flagged probe nodes with a halo one hop too shallow."""
    layer_count = case.model.config.layer_count
    partition_set = partition_case(case, num_partitions, max(layer_count - 1, 0))
    full = full_forward(case.graph, case.features, case.model).values
    worst = 0.0
    for partition in partition_set:
        local = local_forward(partition, case.graph, case.features, case.model)
        worst = max(worst, float(np.max(np.abs(local.values - full[local.node_ids]), initial=0.0)))
    probe_set = replace(partition_set, halo_depth=layer_count)
    flagged = check_halo_sufficiency(case.graph, probe_set, probes=case.graph.node_count, seed=0)
    return worst, len(flagged)


def knn_mismatches(instances: int, max_points: int, max_k: int, seed: int = 0) -> int:
    """Number of random instances where the kd-tree graph differs from the brute-force graph."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        n = int(rng.integers(2, max_points + 1))
        k = int(rng.integers(1, max_k + 1))
        # Integer lattice coordinates create exact distance ties.
        if rng.random() < 0.5:
            positions = rng.integers(0, 6, size=(n, 3)).astype(np.float64)
        else:
            positions = rng.random((n, 3))
        fast = knn_edges(positions, k)
        slow = knn_edges_bruteforce(positions, k)
        if not (np.array_equal(fast.senders, slow.senders) and np.array_equal(fast.receivers, slow.receivers)):
            mismatches += 1
    return mismatches


def random_stack(rng: np.random.Generator, ndim: int = 1) -> StencilStack:
    """Random stack of depth 1 to 5 over convolutions (kernels 3 and 5), pools (1 and 2) and pointwise ops."""
    description = []
    for _ in range(int(rng.integers(1, 6))):
        kind = rng.choice(["conv", "conv", "pool", "pointwise"])
        if kind == "conv":
            description.append({"kind": "conv", "kernel": int(rng.choice([3, 5]))})
        elif kind == "pool":
            description.append({"kind": "pool", "factor": int(rng.choice([1, 2]))})
        else:
            description.append({"kind": "pointwise", "name": str(rng.choice(["silu", "gelu", "relu", "tanh"]))})
    return StencilStack.from_description(description, ndim=ndim, seed=int(rng.integers(2 ** 31)))


def probe_grid(stack: StencilStack, rng: np.random.Generator, num_partitions: int = 4) -> np.ndarray:
    """1D probe long enough that every slab is wider than twice the receptive radius plus two."""
    radius = receptive_radius(stack)
    align = stack.pool_product
    units = num_partitions * -(-(2 * radius + 3) // align)
    return rng.normal(size=units * align)


def stencil_checks(report: VerificationReport, count: int, seed: int = 0, num_partitions: int = 4) -> None:
    rng = np.random.default_rng(seed)
    for index in range(count):
        stack = random_stack(rng)
        probe = probe_grid(stack, rng, num_partitions)
        radius = receptive_radius(stack)
        found = empirical_min_halo(stack, probe, num_partitions)
        report.add(
            f"stencil[{index}] min halo = radius", found == radius, abs(found - radius), 0, str(stack.describe())
        )

        partitions = grid_partition(probe, num_partitions, halo=radius, align=stack.pool_product)
        exact = np.array_equal(stencil_forward(partitions, stack), stack.forward(probe))
        report.add(f"stencil[{index}] bitwise at radius", exact, 0.0 if exact else 1.0, 0.0)


def divergence_check(report: VerificationReport) -> None:
    dims = (9, 8, 7)
    origin = np.array([-0.3, 0.1, 0.2])
    spacing = np.array([0.1, 0.2, 0.15])
    points = ScalarGrid(origin, spacing, dims, np.zeros(int(np.prod(dims)))).points()
    components = [points[:, 0], -points[:, 1], np.zeros(len(points))]
    field = [ScalarGrid(origin, spacing, dims, values) for values in components]
    worst = float(np.max(np.abs(divergence_central(field).values)))
    report.add("divergence of (x, -y, 0)", worst <= DIVERGENCE_TOLERANCE, worst, DIVERGENCE_TOLERANCE)


def run_verification(
    config: Optional[PipelineConfig] = None, seed: Optional[int] = None, workers: Optional[int] = None
) -> VerificationReport:
    """Runs the whole suite and returns the report. Sizes come from ``config.verification``."""
    config = config or PipelineConfig()
    seed = config.seed if seed is None else seed
    workers = config.workers if workers is None else workers
    sizes: VerificationConfig = config.verification
    report = VerificationReport()

    for layer_count in sizes.layer_counts:
        case = random_case(tuple(sizes.level_counts), layer_count, sizes.hidden_dim, seed=seed)
        for num_partitions in sizes.partition_counts:
            partition_set = partition_case(case, num_partitions, layer_count, workers)
            tag = f"L={layer_count} P={num_partitions}"
            for precision, dtype in (("f64", np.float64), ("f32", np.float32)):
                deviation = forward_deviation(case, partition_set, dtype, workers)
                tolerance = FORWARD_TOLERANCE[precision]
                report.add(f"forward {precision} {tag}", deviation <= tolerance, deviation, tolerance)
            grad_error, loss_error = gradient_deviation(case, partition_set, workers)
            report.add(f"gradient {tag}", grad_error <= GRADIENT_TOLERANCE, grad_error, GRADIENT_TOLERANCE)
            report.add(f"loss additivity {tag}", loss_error <= GRADIENT_TOLERANCE, loss_error, GRADIENT_TOLERANCE)
            violations = check_halo_sufficiency(case.graph, partition_set, sizes.halo_probes, seed)
            report.add(f"halo probes {tag}", not violations, len(violations), 0)

        worst, flagged = negative_control(case, max(sizes.partition_counts))
        report.add(
            f"negative control L={layer_count} halo={layer_count - 1}",
            worst > NEGATIVE_CONTROL_THRESHOLD and flagged > 0,
            worst,
            NEGATIVE_CONTROL_THRESHOLD,
            f"{flagged} probe nodes flagged",
        )

    if sizes.training_steps > 0:
        layer_count = sizes.layer_counts[0]
        case = random_case(tuple(sizes.level_counts), layer_count, sizes.hidden_dim, seed=seed)
        num_partitions = sizes.partition_counts[len(sizes.partition_counts) // 2]
        partition_set = partition_case(case, num_partitions, layer_count, workers)
        param_error, loss_error = trajectory_deviation(case, partition_set, sizes.training_steps, workers)
        tag = f"L={layer_count} P={num_partitions} steps={sizes.training_steps}"
        report.add(
            f"training trajectory {tag}", param_error <= TRAJECTORY_TOLERANCE, param_error, TRAJECTORY_TOLERANCE
        )
        report.add(f"training loss log {tag}", loss_error <= TRAJECTORY_TOLERANCE, loss_error, TRAJECTORY_TOLERANCE)

    mismatches = knn_mismatches(sizes.knn_instances, sizes.knn_max_points, sizes.knn_max_k, seed)
    report.add(f"knn oracle ({sizes.knn_instances} instances)", mismatches == 0, mismatches, 0)

    stencil_checks(report, sizes.stencil_stacks, seed)
    divergence_check(report)
    return report

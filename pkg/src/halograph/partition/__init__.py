__all__ = [
    "METHODS",
    "partition_nodes",
    "coordinate_bisection",
    "greedy_bfs",
    "read_owner_file",
    "write_owner_file",
    "Partition",
    "PartitionSet",
    "BalanceReport",
    "hop_operator",
    "expand_halo",
    "balance_report",
    "check_halo_sufficiency",
]

from .partitioners import (
    METHODS,
    partition_nodes,
    coordinate_bisection,
    greedy_bfs,
    read_owner_file,
    write_owner_file,
)
from .halo import (
    Partition,
    PartitionSet,
    BalanceReport,
    hop_operator,
    expand_halo,
    balance_report,
    check_halo_sufficiency,
)

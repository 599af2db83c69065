"""Discrete-event simulation of orphan-transaction handling in Bitcoin-style gossip."""
from .metrics import RunReport, network_overhead, pool_size_summary, removal_breakdown
from .netsim import SimConfig, Simulation, ValueSpec, build_topology, next_block, run
from .node import Block, Ledger, Node
from .orphan_pool import OrphanPool, RemovalCause
from .txmodel import Transaction, Workload, WorkloadConfig, build_workload

__version__ = "0.1.0"

__all__ = [
    "Block", "Ledger", "Node", "OrphanPool", "RemovalCause", "RunReport", "SimConfig",
    "Simulation", "Transaction", "ValueSpec", "Workload", "WorkloadConfig",
    "build_topology", "build_workload", "network_overhead", "next_block",
    "pool_size_summary", "removal_breakdown", "run",
]

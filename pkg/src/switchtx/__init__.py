"""Simulator for OLTP transactions that run partly inside a programmable switch."""

from .cluster import Cluster, ClusterConfig, Mode
from .config import ExperimentConfig, load_config, parse_config
from .layout import LayoutPlan, plan_layout, random_layout
from .node import CCPolicy
from .pipeline import LockMode, SwitchConfig, SwitchPipeline
from .workloads import WorkloadKind, WorkloadSpec, make_workload

__all__ = [
    "CCPolicy",
    "Cluster",
    "ClusterConfig",
    "ExperimentConfig",
    "LayoutPlan",
    "LockMode",
    "Mode",
    "SwitchConfig",
    "SwitchPipeline",
    "WorkloadKind",
    "WorkloadSpec",
    "load_config",
    "make_workload",
    "parse_config",
    "plan_layout",
    "random_layout",
]

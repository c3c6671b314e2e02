"""Experiment configuration read from ``key = value`` files."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .cluster import ClusterConfig, Mode
from .errors import ConfigError
from .network import LatencyModel
from .node import CCPolicy
from .pipeline import LockMode, SwitchConfig
from .workloads import SmallBankSpec, TPCCSpec, WorkloadKind, WorkloadSpec, YCSBSpec


@dataclass
class ExperimentConfig:
    workload: str = "ycsb"
    mode: str = "p4db"
    protocol: str = "no-wait"
    nodes: int = 8
    workers_per_node: int = 20
    distributed_prob: float = 0.2
    seed: int = 1
    # timed run; ignored when max_txns is set
    duration: int = 150_000
    warmup: int = 30_000
    max_txns: int = 0
    # YCSB
    ycsb_variant: str = "A"
    table_size: int = 1_000_000
    hot_per_node: int = 50
    hot_access_prob: float = 0.75
    ops_per_txn: int = 8
    hot_mode: str = "txn"
    # SmallBank
    accounts: int = 100_000
    hot_txn_prob: float = 0.9
    smallbank_mix: str = "1,1,1,1,1,1"
    # TPC-C
    warehouses: int = 8
    hot_stock: int = 20
    remote_prob: float = 0.01
    # switch
    num_stages: int = 12
    arrays_per_stage: int = 2
    slots_per_array: int = 65536
    lock_mode: str = "two-bit"
    fast_recirculation: bool = True
    layout: str = "optimal"
    trace_size: int = 20_000
    min_count: int = 5
    # cost model
    node_rtt: int = 2000
    jitter: int = 0
    op_cost: int = 500
    backoff_max: int = 1000
    retry: bool = True
    lm_queue_depth: int = 16
    # audits
    audit: bool = True
    history: bool = False

    def __post_init__(self):
        try:
            Mode(self.mode)
            CCPolicy(self.protocol)
            WorkloadKind(self.workload)
            LockMode(self.lock_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.layout not in ("optimal", "random"):
            raise ConfigError(f"layout must be optimal or random, not {self.layout!r}")
        if self.max_txns <= 0 and not 0 <= self.warmup < self.duration:
            raise ConfigError("need 0 <= warmup < duration")

    # -- construction ------------------------------------------------------------

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def workload_spec(self) -> WorkloadSpec:
        kind = WorkloadKind(self.workload)
        if kind == WorkloadKind.YCSB:
            params = YCSBSpec(self.ycsb_variant, self.table_size, self.hot_per_node, self.hot_access_prob,
                              self.ops_per_txn, self.hot_mode)
        elif kind == WorkloadKind.SMALLBANK:
            mix = tuple(float(x) for x in self.smallbank_mix.split(","))
            params = SmallBankSpec(accounts=self.accounts, hot_per_node=self.hot_per_node,
                                   hot_txn_prob=self.hot_txn_prob, mix=mix)
        else:
            params = TPCCSpec(warehouses=self.warehouses, hot_stock=self.hot_stock, remote_prob=self.remote_prob)
        return WorkloadSpec(kind, params, self.nodes, self.workers_per_node, self.distributed_prob, self.seed)

    def switch_config(self) -> SwitchConfig:
        return SwitchConfig(num_stages=self.num_stages, arrays_per_stage=self.arrays_per_stage,
                            slots_per_array=self.slots_per_array, lock_mode=LockMode(self.lock_mode),
                            fast_recirculation=self.fast_recirculation)

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(
            nodes=self.nodes,
            workers_per_node=self.workers_per_node,
            mode=Mode(self.mode),
            policy=CCPolicy(self.protocol),
            latency=LatencyModel(self.node_rtt, self.jitter, self.seed),
            switch=self.switch_config(),
            op_cost=self.op_cost,
            backoff_max=self.backoff_max,
            retry=self.retry,
            lm_queue_depth=self.lm_queue_depth,
            record_history=self.history,
            seed=self.seed,
        )

    # -- text form -----------------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_SECTION = "experiment"


def _convert(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw.replace("_", ""))
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind.__name__}") from None
    return raw


_TYPES = {f.name: {"int": int, "float": float, "bool": bool, "str": str}[f.type] for f in fields(ExperimentConfig)}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, a section header is optional."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = f"[{_SECTION}]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _convert(key, raw, _TYPES[key])
    for key, raw in overrides.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _convert(key, str(raw), _TYPES[key]) if isinstance(raw, str) else raw
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)

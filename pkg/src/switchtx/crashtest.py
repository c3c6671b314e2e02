"""Crash-injection runs that compare log-based recovery with a ground-truth oracle."""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field

import numpy as np

from .cluster import Cluster, ClusterConfig, Mode
from .errors import SwitchTxError
from .layout import find_cooffload_keys, plan_layout
from .network import LatencyModel
from .node import CCPolicy
from .pipeline import SwitchConfig
from .recovery import committed_set, recover_node, recover_switch
from .workloads import SmallBankSpec, WorkloadSpec, YCSBSpec, make_workload


class CrashKind(enum.Enum):
    SWITCH = "switch"
    NODE = "node"
    COMBINED = "combined"


@dataclass
class CrashOutcome:
    kind: CrashKind
    seed: int
    crash_time: int
    node: int | None
    in_flight: int = 0
    # False when the logs admit several final switch states
    determined: bool = True
    mismatches: list = field(default_factory=list)
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.error

    def row(self) -> dict:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "crash_time": self.crash_time,
            "node": "" if self.node is None else self.node,
            "in_flight": self.in_flight,
            "determined": int(self.determined),
            "ok": int(self.ok),
            "detail": self.error or "; ".join(self.mismatches[:3]),
        }


def _scenario_cluster(seed: int, nodes: int = 3, workers: int = 2) -> Cluster:
    rng = np.random.default_rng([seed, 99])
    if rng.random() < 0.5:
        params = SmallBankSpec(accounts=120, hot_per_node=4)
        kind = "smallbank"
    else:
        params = YCSBSpec(table_size=600, hot_per_node=8, ops_per_txn=4, hot_mode="op", hot_access_prob=0.6)
        kind = "ycsb"
    spec = WorkloadSpec(kind, params, nodes=nodes, workers_per_node=workers,
                        distributed_prob=float(rng.uniform(0, 0.5)), seed=seed)
    wl = make_workload(spec)
    sw = SwitchConfig(num_stages=6, arrays_per_stage=2, slots_per_array=32)
    trace = wl.trace(400)
    hot = wl.nominal_hot_keys()
    hot = sorted(set(hot) | find_cooffload_keys(trace, hot))
    plan = plan_layout(trace, hot, sw, seed=seed)
    cfg = ClusterConfig(nodes=nodes, workers_per_node=workers, mode=Mode.P4DB, policy=CCPolicy.NO_WAIT,
                        latency=LatencyModel(), switch=sw, seed=seed)
    return Cluster(cfg, wl, plan)


def _rollback(rows: dict, undo: dict, keep: set) -> dict:
    state = dict(rows)
    # undo lists hold (key, previous value or None); later transactions first
    for txn in sorted(undo, reverse=True):
        if txn in keep:
            continue
        for key, old in reversed(undo[txn]):
            if old is None:
                state.pop(key, None)
            else:
                state[key] = old
    return state


def run_crash_scenario(kind: CrashKind, seed: int, budget: int = 200_000) -> CrashOutcome:
    """Crash at a random time, keep the survivors running for ten round trips, then recover."""
    kind = CrashKind(kind)
    cluster = _scenario_cluster(seed)
    rng = np.random.default_rng([seed, 7, 7])
    rtt = cluster.config.latency.node_rtt
    crash_time = int(rng.integers(2 * rtt, 15 * rtt))
    victim = int(rng.integers(cluster.nodes)) if kind != CrashKind.SWITCH else None
    out = CrashOutcome(kind, seed, crash_time, victim)
    cluster.start(max_txns=1 << 40)
    cluster.net.run_until(crash_time)
    if victim is not None:
        store = cluster.stores[victim]
        rows_at_crash = dict(store.rows)
        undo_at_crash = copy.deepcopy(store.undo)
        cluster.crash_node(victim)
    if kind != CrashKind.NODE:
        cluster.crash_switch()
    cluster.net.run_until(crash_time + 10 * rtt)
    logs = cluster.wals
    try:
        if kind != CrashKind.NODE:
            truth = cluster.switch_oracle()
            inf = recover_switch(logs, cluster.initial_hot, budget)
            out.in_flight = sum(1 for w in logs for r in w if r.kind.name == "SWITCH_INTENT") - sum(
                1 for w in logs for r in w if r.kind.name == "SWITCH_RESULT"
            )
            out.determined = inf.determined
            if inf.determined:
                out.mismatches += [f"switch {k}: {inf.state[k]} != {v}" for k, v in truth.items() if inf.state[k] != v]
        if victim is not None:
            committed = committed_set(logs)
            truth = _rollback(rows_at_crash, undo_at_crash, committed)
            got = recover_node(logs[victim], committed)
            initial = cluster.workload.initial_value
            for key in sorted(set(truth) | set(got)):
                a, b = got.get(key, initial(key)), truth.get(key, initial(key))
                if a != b:
                    out.mismatches.append(f"node {victim} {key}: {a} != {b}")
    except SwitchTxError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def crash_campaign(runs: int = 500, seed: int = 0, budget: int = 200_000) -> list[CrashOutcome]:
    kinds = list(CrashKind)
    return [run_crash_scenario(kinds[i % 3], seed * 100_003 + i, budget) for i in range(runs)]

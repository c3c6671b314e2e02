"""Benchmark harness: offline layout step, timed runs, sweeps and CSV output."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

from .audit import AuditReport, audit_cluster
from .cluster import Cluster, ClusterConfig, Mode
from .config import ExperimentConfig
from .crashtest import CrashOutcome, crash_campaign
from .layout import (LayoutPlan, PassKind, classify_transaction, find_cooffload_keys, plan_layout,
                     random_layout, select_offload_set, to_instructions)
from .metrics import METRIC_COLUMNS, Metrics
from .network import LatencyModel
from .node import CCPolicy
from .packet import SwitchTxnPacket
from .pipeline import SwitchConfig, SwitchPipeline
from .workloads import SmallBankSpec, TPCCSpec, Workload, WorkloadSpec, YCSBSpec, make_workload

CONFIG_COLUMNS = tuple(f.name for f in fields(ExperimentConfig))
RESULT_COLUMNS = CONFIG_COLUMNS + METRIC_COLUMNS + ("audit_ok", "audit_detail")


@dataclass
class Offload:
    hot: list
    plan: LayoutPlan
    trace: list


def offload_plan(cfg: ExperimentConfig, workload: Workload | None = None) -> Offload:
    """Trace the workload, pick the keys to offload and lay them out on the switch."""
    wl = workload or make_workload(cfg.workload_spec())
    sw = cfg.switch_config()
    trace = wl.trace(cfg.trace_size)
    hot = select_offload_set(trace, sw.capacity, cfg.min_count)
    extra = find_cooffload_keys(trace, hot) - set(hot)
    room = sw.capacity - len(hot)
    hot = hot + sorted(extra)[:room]
    if cfg.layout == "optimal":
        plan = plan_layout(trace, hot, sw, seed=cfg.seed)
    else:
        plan = random_layout(hot, sw, seed=cfg.seed)
    return Offload(hot, plan, trace)


def pass_profile(trace, plan: LayoutPlan) -> dict:
    """Single/multi-pass counts over the trace transactions that are fully offloaded."""
    out = {"single": 0, "multi": 0, "extra_passes": 0}
    for txn in trace:
        if not txn.ops or any(op.key not in plan for op in txn.ops):
            continue
        c = classify_transaction(txn.ops, plan, reorder=True)
        if c.kind == PassKind.SINGLE_PASS:
            out["single"] += 1
        else:
            out["multi"] += 1
            out["extra_passes"] += c.pass_count - 1
    return out


def switch_throughput(trace, plan: LayoutPlan, config: SwitchConfig, initial=None) -> float:
    """Packets completed per cycle when the fully offloaded trace transactions arrive all at once."""
    sw = SwitchPipeline(config)
    sw.load_layout(plan, initial or {k: 0 for k in plan.placement})
    count = 0
    for txn in trace:
        if not txn.ops or any(op.key not in plan for op in txn.ops):
            continue
        c = classify_transaction(txn.ops, plan, reorder=True)
        sw.submit(SwitchTxnPacket(count, to_instructions(txn.ops, plan, c)))
        count += 1
    if count == 0:
        return 0.0
    sw.run_until_drained()
    return count / sw.cycle


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: Metrics
    audit: AuditReport
    cluster: Cluster

    @property
    def ok(self) -> bool:
        return self.audit.ok

    def row(self) -> dict:
        row = {name: getattr(self.config, name) for name in CONFIG_COLUMNS}
        row.update(self.metrics.row())
        row["audit_ok"] = int(self.audit.ok)
        row["audit_detail"] = "; ".join(self.audit.violations[:3])
        return row


def run_experiment(cfg: ExperimentConfig, offload: Offload | None = None) -> RunResult:
    """One run. Every mode sees the same transaction streams for a given seed."""
    wl = make_workload(cfg.workload_spec())
    mode = Mode(cfg.mode)
    plan, lm_keys = None, ()
    if mode != Mode.NO_SWITCH:
        offload = offload or offload_plan(cfg, wl)
        if mode == Mode.P4DB:
            plan = offload.plan
        else:
            lm_keys = offload.hot
    cluster = Cluster(cfg.cluster_config(), wl, plan, lm_hot_keys=lm_keys)
    if cfg.max_txns > 0:
        metrics = cluster.run(max_txns=cfg.max_txns)
    else:
        metrics = cluster.run(duration=cfg.duration, warmup=cfg.warmup)
    report = AuditReport()
    if cfg.audit:
        cluster.drain()
        report = audit_cluster(cluster)
    return RunResult(cfg, metrics, report, cluster)


def sweep(cfg: ExperimentConfig, param: str | None = None, values=(), modes=("p4db", "no-switch", "lm-switch")):
    """Run every (value, mode) pair; adds a speedup column relative to no-switch."""
    points = [cfg.replace(**{param: v}) for v in values] if param else [cfg]
    results = []
    for point in points:
        offload = offload_plan(point) if any(m != "no-switch" for m in modes) else None
        batch = [run_experiment(point.replace(mode=m), offload) for m in modes]
        base = next((r.metrics.throughput for r in batch if r.config.mode == "no-switch"), None)
        for r in batch:
            row = r.row()
            row["speedup"] = round(r.metrics.throughput / base, 4) if base else ""
            results.append((r, row))
    return results


def audit_scenario(seed: int, max_txns: int = 50) -> tuple[AuditReport, Cluster]:
    """A small seeded run that mixes hot, cold and warm transactions, fully audited.

    The workload, mode and lock policy rotate with the seed. Only part of the
    nominal hot set is offloaded (all of it for SmallBank, whose hot/cold
    pairs never cross), which produces warm transactions.
    """
    kind = ("smallbank", "tpcc", "ycsb")[seed % 3]
    params = {
        "ycsb": YCSBSpec(table_size=2000, hot_per_node=6, ops_per_txn=4, hot_mode="op"),
        "smallbank": SmallBankSpec(accounts=300, hot_per_node=4),
        "tpcc": TPCCSpec(warehouses=3, districts=2, customers=5, items=50, hot_stock=3),
    }[kind]
    spec = WorkloadSpec(kind, params, nodes=3, workers_per_node=3, distributed_prob=0.3, seed=seed)
    wl = make_workload(spec)
    sw = SwitchConfig(num_stages=6, slots_per_array=64)
    hot = wl.nominal_hot_keys()
    if kind != "smallbank":
        hot = hot[: max(1, len(hot) * 2 // 3)]
    plan = plan_layout(wl.trace(200), hot, sw, seed=seed)
    mode = (Mode.P4DB, Mode.P4DB, Mode.NO_SWITCH, Mode.LM_SWITCH)[seed % 4]
    policy = (CCPolicy.NO_WAIT, CCPolicy.WAIT_DIE)[(seed // 4) % 2]
    cfg = ClusterConfig(nodes=3, workers_per_node=3, mode=mode, policy=policy, latency=LatencyModel(seed=seed),
                        switch=sw, seed=seed, record_history=True)
    cluster = Cluster(cfg, wl, plan, lm_hot_keys=hot)
    cluster.run(max_txns=max_txns)
    return audit_cluster(cluster), cluster


def crash_test(runs: int = 500, seed: int = 0) -> list[CrashOutcome]:
    return crash_campaign(runs, seed)


def write_csv(rows, stream=None) -> str:
    """Rows as CSV with the column order of the first row; returns the text."""
    rows = list(rows)
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text

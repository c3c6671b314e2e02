"""Invariant audits run after a simulation.

All checks read the cluster's recorded history and final state; none of
them influence the run itself.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import networkx as nx

from .errors import AuditFailure
from .packet import apply_opcode


@dataclass
class AuditReport:
    checks: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, name: str, problems) -> None:
        self.checks.append(name)
        self.violations.extend(f"{name}: {p}" for p in problems)

    def raise_if_failed(self) -> None:
        if self.violations:
            raise AuditFailure("; ".join(self.violations[:5]))


def _order_key(stamp):
    # switch accesses are stamped ("gid", n); node and lock-manager accesses (time, seq)
    if stamp[0] == "gid":
        return (1, stamp[1], 0)
    return (0, *stamp)


def conflict_graph(history) -> nx.DiGraph:
    """Precedence graph over committed transactions.

    Per key, accesses are ordered by lock acquisition (node-resident keys) or
    by gid (switch-resident keys); every write is ordered after the previous
    write and the reads since, and every read after the previous write.
    """
    g = nx.DiGraph()
    per_key = defaultdict(list)
    for entry in history:
        g.add_node(entry.aid)
        for key, stamp, is_write in entry.accesses:
            per_key[key].append((_order_key(stamp), entry.aid, is_write))
    for key, accesses in per_key.items():
        accesses.sort()
        last_writer = None
        readers: list = []
        for _, aid, is_write in accesses:
            if is_write:
                for r in readers:
                    if r != aid:
                        g.add_edge(r, aid, key=key)
                if last_writer is not None and last_writer != aid:
                    g.add_edge(last_writer, aid, key=key)
                last_writer = aid
                readers = []
            else:
                if last_writer is not None and last_writer != aid:
                    g.add_edge(last_writer, aid, key=key)
                readers.append(aid)
    return g


def check_acyclic(history) -> list[str]:
    g = conflict_graph(history)
    if nx.is_directed_acyclic_graph(g):
        return []
    cycle = nx.find_cycle(g)
    return [f"conflict cycle {[u for u, _, *rest in cycle]}"]


def replay_switch(completions, initial: dict, slot_key: dict) -> dict:
    """Register contents after running completed packets one at a time in gid order."""
    state = dict(initial)
    for done in sorted(completions, key=lambda c: c.gid):
        acc, flag = done.packet.acc_in, done.packet.flag_in
        for batch in done.packet.pass_plan:
            for ins in batch:
                key = slot_key[(ins.stage, ins.array, ins.slot)]
                new, _, acc, flag = apply_opcode(ins.opcode, ins.operand, ins.predicate, state[key], acc, flag)
                state[key] = new
    return state


def check_switch_replay(cluster) -> list[str]:
    if cluster.switch_crashed:
        return []
    plan = cluster.plan
    slot_key = {v: k for k, v in plan.placement.items()}
    snap = cluster.switch.snapshot_registers()
    if not snap.consistent:
        return ["switch pipeline not drained"]
    expect = replay_switch(cluster.completions, cluster.initial_hot, slot_key)
    return [f"{k}: switch {snap[k]} != replay {v}" for k, v in expect.items() if snap[k] != v]


def _apply_ops(state: dict, ops, acc: int, flag: bool, initial):
    for op in ops:
        value = state[op.key] if op.key in state else initial(op.key)
        new, _, acc, flag = apply_opcode(op.opcode, op.operand, op.predicate, value, acc, flag)
        if op.is_write:
            state[op.key] = new
    return acc, flag


def serial_state(history, initial) -> tuple[dict, dict]:
    """Replay committed transactions in a topological order of the conflict graph.

    Returns (final values, owner node per node-resident key).
    """
    g = conflict_graph(history)
    by_aid = {e.aid: e for e in history}
    state: dict = {}
    owner: dict = {}
    for aid in nx.lexicographical_topological_sort(g):
        entry = by_aid[aid]
        for node, ops, acc, flag in entry.cold_calls:
            _apply_ops(state, ops, acc, flag, initial)
            for op in ops:
                owner[op.key] = node
        if entry.switch_ops:
            _apply_ops(state, entry.switch_ops, entry.acc_in, entry.flag_in, initial)
    return state, owner


def check_full_state(cluster) -> list[str]:
    """Final node and switch contents equal a serial execution of the committed history."""
    if not cluster.history and cluster.committed_ids:
        return ["history was not recorded"]
    expect, owner = serial_state(cluster.history, cluster.workload.initial_value)
    snap = cluster.switch.snapshot_registers()
    problems = []
    for key, value in expect.items():
        if key in cluster.plan.placement:
            actual = snap[key]
        else:
            actual = cluster.stores[owner[key]].get(key)
        if actual != value:
            problems.append(f"{key}: actual {actual} != serial {value}")
    return problems


def _current(cluster, key: str, node: int) -> int:
    if key in cluster.plan.placement:
        return cluster.switch.snapshot_registers()[key]
    return cluster.stores[node].get(key)


def check_smallbank_conservation(cluster) -> list[str]:
    """Total money changes only by deposits and successful withdrawals."""
    wl = cluster.workload
    snap = cluster.switch.snapshot_registers()
    total = 0
    for store in cluster.stores:
        for key, value in store.rows.items():
            if key not in cluster.plan.placement:
                total += value - wl.initial_value(key)
    for key, value in snap.items():
        total += value - cluster.initial_hot[key]
    expect = cluster.ledger["delta"]
    return [] if total == expect else [f"balance drift {total} != committed deltas {expect}"]


def check_tpcc_ytd(cluster) -> list[str]:
    """Warehouse year-to-date equals the committed payments ledger."""
    wl = cluster.workload
    problems = []
    for w in range(wl.p.warehouses):
        key = f"w_ytd:{w}"
        delta = _current(cluster, key, wl.owner(w)) - wl.initial_value(key)
        if delta != cluster.ledger[("ytd", w)]:
            problems.append(f"{key}: {delta} != ledger {cluster.ledger[('ytd', w)]}")
    return problems


def check_quiescent(cluster) -> list[str]:
    problems = []
    for n, table in enumerate(cluster.locks):
        if n in cluster.crashed_nodes:
            continue
        if table.entries:
            problems.append(f"node {n} still holds locks on {sorted(table.entries)[:3]}")
    if cluster.lm_locks.entries:
        problems.append("lock-manager switch still holds locks")
    return problems


def audit_cluster(cluster, *, quiescent: bool | None = None) -> AuditReport:
    """Run every audit that applies to the cluster's workload and recorded state."""
    report = AuditReport()
    name = getattr(cluster.workload, "name", "")
    drained = cluster.switch.drained and not cluster.active
    if quiescent is None:
        quiescent = drained
    if cluster.config.record_history:
        report.add("serializability", check_acyclic(cluster.history))
        if quiescent:
            report.add("serial-state", check_full_state(cluster))
    if quiescent:
        report.add("switch-replay", check_switch_replay(cluster))
        report.add("quiescent", check_quiescent(cluster))
        if name == "smallbank":
            report.add("smallbank-conservation", check_smallbank_conservation(cluster))
        if name == "tpcc":
            report.add("tpcc-ytd", check_tpcc_ytd(cluster))
    return report

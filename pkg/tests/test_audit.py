from dataclasses import dataclass, field

from hypothesis import given, settings, strategies as st

from oracles import conflict_cycle, replay_packets
from switchtx.audit import AuditReport, audit_cluster, check_acyclic, conflict_graph
from switchtx.bench import audit_scenario
from switchtx.errors import AuditFailure

import pytest


@dataclass
class Entry:
    aid: int
    accesses: list = field(default_factory=list)


def test_read_write_edges():
    h = [Entry(1, [("x", (1, 0), False)]), Entry(2, [("x", (2, 0), True)]), Entry(3, [("x", (3, 0), False)])]
    g = conflict_graph(h)
    assert set(g.edges) == {(1, 2), (2, 3)}


def test_gid_stamps_order_after_time_stamps():
    h = [Entry(1, [("x", ("gid", 0), True)]), Entry(2, [("x", (99, 0), True)])]
    assert set(conflict_graph(h).edges) == {(2, 1)}


def test_cycle_reported():
    h = [
        Entry(1, [("x", (1, 0), True), ("y", (4, 0), True)]),
        Entry(2, [("y", (2, 0), True), ("x", (3, 0), True)]),
    ]
    assert check_acyclic(h)


access = st.tuples(st.sampled_from("xyz"), st.integers(0, 30), st.booleans())


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.integers(0, 6), st.lists(access, min_size=1, max_size=4), min_size=1, max_size=6))
def test_acyclicity_matches_dfs_oracle(hist):
    # distinct order values per key, as lock order guarantees
    seen = set()
    clean = {}
    for t, accs in hist.items():
        keep = []
        for key, order, w in accs:
            if (key, order) not in seen:
                seen.add((key, order))
                keep.append((key, (order, t), w))
        clean[t] = keep
    entries = [Entry(t, a) for t, a in clean.items()]
    assert bool(check_acyclic(entries)) == conflict_cycle(clean)


def test_report_raise():
    r = AuditReport()
    r.add("a", [])
    assert r.ok
    r.add("b", ["bad"])
    with pytest.raises(AuditFailure, match="b: bad"):
        r.raise_if_failed()


def test_audit_detects_tampered_switch_register():
    report, cluster = audit_scenario(0)
    assert report.ok
    key = next(iter(cluster.plan.placement))
    stage, array, slot = cluster.plan.placement[key]
    cluster.switch.registers[stage][array].slots[slot] += 1
    bad = audit_cluster(cluster)
    assert any(v.startswith("switch-replay") for v in bad.violations)
    assert any(v.startswith("smallbank-conservation") for v in bad.violations)


def test_audit_detects_tampered_node_row():
    report, cluster = audit_scenario(1)  # tpcc
    assert report.ok
    node = 0
    key = next(k for k in cluster.stores[node].rows if k.startswith("c_bal"))
    cluster.stores[node].rows[key] += 7
    assert any(v.startswith("serial-state") for v in audit_cluster(cluster).violations)


def test_switch_replay_matches_independent_oracle():
    report, cluster = audit_scenario(4)
    slot_key = {v: k for k, v in cluster.plan.placement.items()}
    packets = [c.packet for c in sorted(cluster.completions, key=lambda c: c.gid)]
    state, _ = replay_packets(packets, cluster.initial_hot, slot_key)
    snap = cluster.switch.snapshot_registers()
    assert {k: snap[k] for k in state} == state

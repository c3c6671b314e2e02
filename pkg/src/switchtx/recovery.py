"""Crash recovery from the per-node write-ahead logs.

Switch registers are volatile. Their content is rebuilt by replaying every
logged switch transaction in gid order. Transactions whose result never got
logged (the switch or the coordinator died first) have no gid, so their
position is inferred: the gid sequence has to be gap-free and every logged
result must equal the register value seen at that point of the replay.
Node-resident tuples are rebuilt from ColdWrite after-images of globally
committed transactions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InconsistentLogs, NoConsistentOrder
from .packet import Opcode, Predicate, apply_opcode
from .wal import LogKind, WriteAheadLog


@dataclass
class SwitchTxnRecord:
    txn_id: int
    home: int
    ops: list  # [key, opcode, operand, predicate] in packet order
    acc0: int = 0
    flag0: bool = False
    gid: int | None = None
    results: list | None = None

    @property
    def anchored(self) -> bool:
        return self.gid is not None


@dataclass
class Inference:
    order: list  # txn ids in inferred execution order
    state: dict
    # more than one order is consistent with the logs
    ambiguous: bool
    # every consistent order yields the same final state
    determined: bool
    explored: int = 0
    final_states: int = 1


def collect_switch_records(logs: Sequence[WriteAheadLog]) -> list[SwitchTxnRecord]:
    records: dict[int, SwitchTxnRecord] = {}
    results = {}
    for node, wal in enumerate(logs):
        for rec in wal:
            if rec.kind == LogKind.SWITCH_INTENT:
                if rec.txn_id in records:
                    raise InconsistentLogs(f"txn {rec.txn_id} has two switch intents")
                records[rec.txn_id] = SwitchTxnRecord(
                    rec.txn_id, node, [list(o) for o in rec.payload["ops"]], rec.payload.get("acc0", 0),
                    bool(rec.payload.get("flag0", 0)),
                )
            elif rec.kind == LogKind.SWITCH_RESULT:
                results[rec.txn_id] = rec.payload
    seen_gids: dict[int, int] = {}
    for txn, payload in results.items():
        if txn not in records:
            raise InconsistentLogs(f"txn {txn} has a switch result but no intent")
        gid = payload["gid"]
        if gid in seen_gids:
            raise InconsistentLogs(f"gid {gid} assigned to txns {seen_gids[gid]} and {txn}")
        seen_gids[gid] = txn
        records[txn].gid = gid
        records[txn].results = list(payload["results"])
    return sorted(records.values(), key=lambda r: r.txn_id)


def _run(record: SwitchTxnRecord, state: dict):
    """Apply one switch transaction; returns (new state, results) without mutating ``state``."""
    new = dict(state)
    acc, flag = record.acc0, record.flag0
    results = []
    for key, opcode, operand, predicate in record.ops:
        if key not in new:
            raise InconsistentLogs(f"txn {record.txn_id} touches unknown switch key {key}")
        value, result, acc, flag = apply_opcode(Opcode(opcode), operand, Predicate(predicate), new[key], acc, flag)
        new[key] = value
        results.append(result)
    return new, results


def _freeze(state: dict) -> tuple:
    return tuple(sorted(state.items()))


class _Budget(Exception):
    pass


def infer_order(records: Iterable[SwitchTxnRecord], initial: Mapping[str, int], budget: int = 200_000) -> Inference:
    """Find execution orders of switch transactions consistent with the logs.

    Anchored records (with a gid) keep their gid order. Before the record
    with gid ``g`` exactly ``g - previous_gid - 1`` unanchored records must
    have run; any remaining unanchored records ran after the last gid. The
    search is a memoized depth-first enumeration over (position, remaining
    unanchored set, register state).

    Raises NoConsistentOrder if no order reproduces the logged results.
    """
    records = list(records)
    anchored = sorted((r for r in records if r.anchored), key=lambda r: r.gid)
    loose = sorted((r for r in records if not r.anchored), key=lambda r: r.txn_id)
    gaps = []
    prev = -1
    for r in anchored:
        gaps.append(r.gid - prev - 1)
        prev = r.gid
    if sum(gaps) > len(loose):
        raise NoConsistentOrder(
            f"{sum(gaps)} gid gaps but only {len(loose)} switch transactions without a result"
        )
    explored = 0
    memo: dict = {}
    fill_memo: dict = {}

    def fill(n: int, remaining: frozenset, state: dict) -> dict:
        """Run ``n`` of ``remaining`` in every order: {(frozen state, rest): [state, sample order, count]}."""
        nonlocal explored
        key = (n, remaining, _freeze(state))
        if key in fill_memo:
            return fill_memo[key]
        if n == 0:
            out = {(key[2], remaining): [state, [], 1]}
        else:
            out = {}
            for idx in sorted(remaining):
                explored += 1
                if explored > budget:
                    raise _Budget
                nxt, _ = _run(loose[idx], state)
                for k, (st, order, count) in fill(n - 1, remaining - {idx}, nxt).items():
                    if k in out:
                        out[k][2] += count
                    else:
                        out[k] = [st, [loose[idx].txn_id, *order], count]
        fill_memo[key] = out
        return out

    def search(i: int, remaining: frozenset, state: dict) -> dict:
        """Final states reachable from anchored position ``i``: {frozen: [state, sample order, count]}."""
        key = (i, remaining, _freeze(state))
        if key in memo:
            return memo[key]
        out: dict = {}
        if i == len(anchored):
            for (f, _), (st, order, count) in fill(len(remaining), remaining, state).items():
                if f in out:
                    out[f][2] += count
                else:
                    out[f] = [st, order, count]
            memo[key] = out
            return out
        rec = anchored[i]
        for (_, rest), (st, order, count) in fill(gaps[i], remaining, state).items():
            after, results = _run(rec, st)
            if results != rec.results:
                continue
            for f, (final, tail, n_tail) in search(i + 1, rest, after).items():
                if f in out:
                    out[f][2] += count * n_tail
                else:
                    out[f] = [final, [*order, rec.txn_id, *tail], count * n_tail]
        memo[key] = out
        return out

    # only keys some logged transaction touches can change
    touched = {op[0] for r in records for op in r.ops}
    start = {k: v for k, v in initial.items() if k in touched}
    missing = touched - start.keys()
    if missing:
        raise InconsistentLogs(f"logged switch transactions touch unknown keys {sorted(missing)[:3]}")
    try:
        finals = search(0, frozenset(range(len(loose))), start)
    except _Budget:
        # too many candidates: settle for one consistent order
        order, state = _first_order(anchored, loose, gaps, start)
        return Inference(order, {**initial, **state}, ambiguous=True, determined=False,
                         explored=explored, final_states=-1)
    if not finals:
        raise NoConsistentOrder("no order of the in-flight switch transactions reproduces the logged results")
    first = min(finals, key=lambda f: finals[f][1])
    state, order, _ = finals[first]
    state = {**initial, **state}
    orders = sum(c for _, _, c in finals.values())
    return Inference(
        order,
        state,
        ambiguous=orders > 1,
        determined=len(finals) == 1,
        explored=explored,
        final_states=len(finals),
    )


def _first_order(anchored, loose, gaps, state):
    """Depth-first search for a single consistent order, without memoization."""
    order: list = []

    def go(i, remaining, state):
        if i == len(anchored):
            for idx in sorted(remaining):
                state, _ = _run(loose[idx], state)
                order.append(loose[idx].txn_id)
            return state
        return pick(i, gaps[i], remaining, state)

    def pick(i, n, remaining, state):
        if n == 0:
            rec = anchored[i]
            after, results = _run(rec, state)
            if results != rec.results:
                return None
            order.append(rec.txn_id)
            res = go(i + 1, remaining, after)
            if res is None:
                order.pop()
            return res
        for idx in sorted(remaining):
            nxt, _ = _run(loose[idx], state)
            order.append(loose[idx].txn_id)
            res = pick(i, n - 1, remaining - {idx}, nxt)
            if res is not None:
                return res
            order.pop()
        return None

    final = go(0, frozenset(range(len(loose))), state)
    if final is None:
        raise NoConsistentOrder("no order of the in-flight switch transactions reproduces the logged results")
    return order, final


def recover_switch(logs: Sequence[WriteAheadLog], initial: Mapping[str, int], budget: int = 200_000) -> Inference:
    """Rebuild switch registers from all node logs and the offload-time values."""
    return infer_order(collect_switch_records(logs), initial, budget)


def committed_set(logs: Iterable[WriteAheadLog]) -> set[int]:
    """Transactions that count as committed: a Commit record or a logged switch intent anywhere."""
    out = set()
    for wal in logs:
        for rec in wal:
            if rec.kind in (LogKind.COMMIT, LogKind.SWITCH_INTENT):
                out.add(rec.txn_id)
    return out


def recover_node(log: WriteAheadLog, committed: set[int], base: Mapping[str, int] | None = None) -> dict:
    """Replay ColdWrite after-images of committed transactions in LSN order."""
    state = dict(base or {})
    last = -1
    for rec in log:
        if rec.lsn <= last:
            raise InconsistentLogs(f"node {log.node_id}: lsn {rec.lsn} after {last}")
        last = rec.lsn
        if rec.kind == LogKind.COLD_WRITE and rec.txn_id in committed:
            state[rec.payload["key"]] = rec.payload["value"]
    return state


# -- scripted scenario ------------------------------------------------------------


@dataclass
class ScenarioResult:
    order: list
    state: dict
    inference: Inference = field(repr=False, default=None)


def lost_intent_scenario() -> ScenarioResult:
    """Two warm transactions adding to switch key ``x`` (initially 1).

    T1 adds 2 and its packet is in flight when both its coordinator and the
    switch fail, so only its intent is logged. T2 adds 3 and its result (gid
    1, read value 3) is logged. Only T1 before T2 explains the read of 3.
    """
    n1, n2 = WriteAheadLog(0), WriteAheadLog(1)
    add = int(Opcode.ADD_READ)
    n1.log(1, LogKind.COLD_WRITE, key="a", value=10)
    n1.log(1, LogKind.SWITCH_INTENT, ops=[["x", add, 2, 0]], acc0=0)
    n2.log(2, LogKind.COLD_WRITE, key="b", value=20)
    n2.log(2, LogKind.SWITCH_INTENT, ops=[["x", add, 3, 0]], acc0=0)
    n2.log(2, LogKind.SWITCH_RESULT, gid=1, results=[3])
    n2.log(2, LogKind.COMMIT)
    inf = recover_switch([n1, n2], {"x": 1})
    return ScenarioResult(inf.order, inf.state, inf)

"""Cluster simulation: database nodes, the switch and transaction coordinators.

Each worker is a closed-loop client that runs one transaction at a time.
Transaction logic is written as generator coroutines that yield simulator
commands (sleep, network hop, parallel branches, lock waits, switch calls);
the :class:`Cluster` drives them from the event loop in
:mod:`switchtx.network`.
"""

from __future__ import annotations

import enum
import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConstraintViolation, UnsupportedShape
from .layout import LayoutPlan, PassKind, classify_transaction, to_instructions
from .metrics import BUCKETS, Metrics
from .model import Op, Txn
from .network import SWITCH, EventKind, LatencyModel, Network
from .node import CCPolicy, LockMode, LockResult, LockTable, NodeStore, execute_ops, lock_modes
from .packet import SwitchTxnPacket
from .pipeline import SwitchConfig, SwitchPipeline
from .wal import LogKind, WriteAheadLog


class Mode(enum.Enum):
    P4DB = "p4db"
    NO_SWITCH = "no-switch"
    LM_SWITCH = "lm-switch"


class TxnClass(enum.Enum):
    HOT = "hot"
    COLD = "cold"
    WARM = "warm"


class Phase(enum.Enum):
    EXECUTING = "executing"
    PREPARED = "prepared"
    SWITCH_SENT = "switch-sent"
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass
class CommitProtocolState:
    phase: Phase = Phase.EXECUTING
    participants: set = field(default_factory=set)
    votes: dict = field(default_factory=dict)

    def advance(self, phase: Phase) -> None:
        if phase == Phase.SWITCH_SENT and any(v is not True for v in self.votes.values()):
            raise RuntimeError("switch sub-transaction sent without unanimous commit votes")
        if self.phase in (Phase.SWITCH_SENT, Phase.COMMITTED) and phase == Phase.ABORTED:
            raise RuntimeError("abort after the switch sub-transaction was sent")
        self.phase = phase


class HotIndex:
    """Keys stored on the switch and where they live; identical on every node."""

    def __init__(self, plan: LayoutPlan | None = None):
        self.plan = plan or LayoutPlan({})

    def __contains__(self, key) -> bool:
        return key in self.plan.placement

    def __len__(self):
        return len(self.plan.placement)

    def placement(self, key: str):
        return self.plan.placement[key]


def classify(txn: Txn, hot: HotIndex) -> TxnClass:
    """Hot if every key is on the switch, cold if none is, warm otherwise.

    Warm transactions run their cold part first, so a cold op may not depend
    on a hot one; such keys have to be offloaded as well.
    """
    flags = [op.key in hot for op in txn.ops]
    if all(flags):
        return TxnClass.HOT
    if not any(flags):
        return TxnClass.COLD
    for op, is_hot in zip(txn.ops, flags):
        if not is_hot and any(d in hot for d in op.deps):
            raise UnsupportedShape(
                f"txn {txn.txn_id}: cold key {op.key} depends on hot keys {[d for d in op.deps if d in hot]}"
            )
    return TxnClass.WARM


# -- simulator commands ----------------------------------------------------------


@dataclass
class Sleep:
    delay: int
    bucket: str


@dataclass
class Hop:
    src: int
    dst: int
    bucket: str


@dataclass
class Parallel:
    branches: list


@dataclass
class LockWait:
    where: int
    attempt: int


@dataclass
class SwitchCall:
    packet: SwitchTxnPacket
    home: int
    # node -> callable run when the result reaches that node (home excluded)
    on_result: dict


_PENDING = object()


class _Proc:
    __slots__ = ("gen", "bd", "on_done", "loc", "home")

    def __init__(self, gen, home: int, on_done=None):
        self.gen = gen
        self.bd = dict.fromkeys(BUCKETS, 0)
        self.on_done = on_done
        self.loc = home
        self.home = home


@dataclass
class Attempt:
    aid: int
    txn: Txn
    home: int
    ts: tuple
    start: int
    cls: TxnClass = TxnClass.COLD
    touched: set = field(default_factory=set)
    accesses: list = field(default_factory=list)
    protocol: CommitProtocolState = field(default_factory=CommitProtocolState)
    lm_keys: list = field(default_factory=list)
    completion: object = None
    results: dict = field(default_factory=dict)  # id(op) -> result
    # (node, ops, acc, flag) for every node-side execution, in execution order
    cold_calls: list = field(default_factory=list)


@dataclass
class _Fail:
    cause: str


@dataclass
class ClusterConfig:
    nodes: int = 8
    workers_per_node: int = 8
    mode: Mode = Mode.P4DB
    policy: CCPolicy = CCPolicy.NO_WAIT
    latency: LatencyModel = field(default_factory=LatencyModel)
    switch: SwitchConfig = field(default_factory=SwitchConfig)
    op_cost: int = 500
    backoff_max: int = 1000
    retry: bool = True
    lm_queue_depth: int = 16
    reorder_ops: bool = True
    record_history: bool = False
    seed: int = 0

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.policy = CCPolicy(self.policy)


@dataclass
class HistoryEntry:
    """A committed transaction as seen by the serializability audit."""

    aid: int
    txn: Txn
    cls: TxnClass
    accesses: list  # (key, order, is_write)
    commit_time: int
    switch_ops: list = field(default_factory=list)
    gid: int | None = None
    acc_in: int = 0
    flag_in: bool = False
    cold_calls: list = field(default_factory=list)


class Cluster:
    def __init__(self, config: ClusterConfig, workload, plan: LayoutPlan | None = None,
                 lm_hot_keys: Sequence[str] = ()):
        self.config = config
        self.workload = workload
        self.net = Network(config.latency)
        self.nodes = config.nodes
        self.stores = [NodeStore(n, workload.initial_value) for n in range(config.nodes)]
        self.locks = [LockTable(config.policy) for _ in range(config.nodes)]
        self.wals = [WriteAheadLog(n) for n in range(config.nodes)]
        self.switch = SwitchPipeline(config.switch)
        plan = plan if config.mode == Mode.P4DB else None
        self.plan = plan or LayoutPlan({})
        self.hot = HotIndex(self.plan)
        self.initial_hot = {k: workload.initial_value(k) for k in self.plan.placement}
        self.switch.load_layout(self.plan, self.initial_hot)
        self.lm_hot = set(lm_hot_keys) if config.mode == Mode.LM_SWITCH else set()
        self.lm_locks = LockTable(config.policy, max_queue=config.lm_queue_depth)
        for n in range(config.nodes):
            self.net.register(n, self._deliver)
        self.net.register(SWITCH, self._deliver)
        self._aid = itertools.count(1)
        self._ts = [0] * config.nodes
        self._waiters: dict[tuple[int, int], tuple[_Proc, int]] = {}
        self._switch_pending: dict[int, tuple[_Proc, SwitchCall, int]] = {}
        self._wake_at: int | None = None
        self.completions = []
        self.history: list[HistoryEntry] = []
        self.metrics = Metrics()
        self.window = (0, None)
        self.max_txns: int | None = None
        self.issued = 0
        self.end_time: int | None = None
        self.crashed_nodes: set[int] = set()
        self.active: dict[int, Attempt] = {}
        self.committed_ids: set[int] = set()
        self._order = itertools.count()
        self.ledger = Counter()
        self.switch_crashed = False
        self.lost_packets: list = []

    # -- event plumbing --------------------------------------------------------

    @property
    def now(self) -> int:
        return self.net.now

    def _deliver(self, msg) -> None:
        msg.body()

    def spawn(self, gen, home: int, on_done=None) -> _Proc:
        proc = _Proc(gen, home, on_done)
        self._resume(proc, None)
        return proc

    def _resume(self, proc: _Proc, value) -> None:
        while True:
            try:
                cmd = proc.gen.send(value)
            except StopIteration as stop:
                if proc.on_done is not None:
                    proc.on_done(stop.value, proc)
                return
            value = self._start(proc, cmd)
            if value is _PENDING:
                return

    def _finish(self, proc: _Proc, t0: int, bucket: str | None, value) -> None:
        if proc.loc in self.crashed_nodes or proc.home in self.crashed_nodes:
            return
        if bucket is not None:
            proc.bd[bucket] += self.now - t0
        self._resume(proc, value)

    def _start(self, proc: _Proc, cmd):
        t0 = self.now
        if isinstance(cmd, Sleep):
            if cmd.delay <= 0:
                return None
            self.net.timer(cmd.delay, lambda: self._finish(proc, t0, cmd.bucket, None))
            return _PENDING
        if isinstance(cmd, Hop):
            if cmd.src == cmd.dst:
                return None

            def arrive():
                proc.loc = cmd.dst
                self._finish(proc, t0, cmd.bucket, None)

            self.net.send(cmd.src, cmd.dst, "hop", arrive)
            return _PENDING
        if isinstance(cmd, Parallel):
            return self._start_parallel(proc, cmd.branches)
        if isinstance(cmd, LockWait):
            self._waiters[(cmd.where, cmd.attempt)] = (proc, t0)
            return _PENDING
        if isinstance(cmd, SwitchCall):
            return self._switch_send(proc, cmd, t0)
        raise TypeError(f"unknown command {cmd!r}")

    def _start_parallel(self, proc: _Proc, branches):
        n = len(branches)
        if n == 0:
            return []
        results = [None] * n
        state = {"left": n, "sync": True, "last": None}

        def done(i):
            def cb(value, child):
                results[i] = value
                state["left"] -= 1
                state["last"] = child
                if state["left"] == 0 and not state["sync"]:
                    self._merge(proc, child)
                    self._resume(proc, results)
            return cb

        for i, gen in enumerate(branches):
            child = _Proc(gen, proc.home, done(i))
            child.loc = proc.loc
            self._resume(child, None)
        state["sync"] = False
        if state["left"] == 0:
            self._merge(proc, state["last"])
            return results
        return _PENDING

    @staticmethod
    def _merge(proc: _Proc, child: _Proc) -> None:
        for k, v in child.bd.items():
            proc.bd[k] += v

    # -- switch ------------------------------------------------------------------

    def _switch_send(self, proc: _Proc, cmd: SwitchCall, t0: int):
        packet = cmd.packet

        def arrive():
            if self.switch_crashed:
                self.lost_packets.append((self.now, packet))
                return
            for done in self.switch.advance_to(self.now):
                self._switch_reply(done)
            self.switch.submit(packet)
            self._switch_kick()

        self._switch_pending[id(packet)] = (proc, cmd, t0)
        self.net.send(cmd.home, SWITCH, "switch-txn", arrive)
        return _PENDING

    def _switch_kick(self) -> None:
        nxt = self.switch.next_event_cycle()
        if nxt is None:
            return
        at = max(nxt + 1, self.now)
        if self._wake_at is not None and self._wake_at <= at:
            return
        self._wake_at = at
        self.net.schedule(at, EventKind.SWITCH_TICK, self._switch_wake)

    def _switch_wake(self) -> None:
        if self._wake_at != self.now or self.switch_crashed:
            return
        self._wake_at = None
        for done in self.switch.advance_to(self.now):
            self._switch_reply(done)
        self._switch_kick()

    def _switch_reply(self, done) -> None:
        proc, cmd, t0 = self._switch_pending.pop(id(done.packet))
        self.completions.append(done)
        targets = sorted(set(cmd.on_result) | {cmd.home})

        def body_for(node):
            if node == cmd.home:
                return lambda: self._finish(proc, t0, "switch", done)
            return cmd.on_result[node]

        self.net.multicast(SWITCH, targets, "switch-result", body_for)

    # -- helpers -----------------------------------------------------------------

    def _timestamp(self, node: int) -> tuple:
        self._ts[node] = max(self._ts[node] + 1, self.now)
        return (self._ts[node], node)

    def _wake(self, where: int, wakeups) -> None:
        for w in wakeups:
            entry = self._waiters.pop((where, w.txn_id), None)
            if entry is None:
                continue
            proc, t0 = entry
            granted = w.granted
            if granted and self.config.record_history:
                att = self.active.get(w.txn_id)
                if att is not None:
                    att.accesses.append((w.key, self._stamp(), self._is_write_key(att, w.key)))
            self.net.timer(0, lambda p=proc, t=t0, g=granted: self._finish(p, t, "lock_acquisition", g))

    def _stamp(self):
        return (self.now, next(self._order))

    @staticmethod
    def _is_write_key(att: Attempt, key: str) -> bool:
        return any(op.key == key and op.is_write for op in att.txn.ops)

    def _release(self, node: int, aid: int) -> None:
        table = self.locks[node]
        self._wake(node, table.release_all(aid))
        table.forget(aid)

    # -- node-side work -------------------------------------------------------------

    def _participant(self, att: Attempt, node: int, ops: list[Op], acc: int, flag: bool):
        """Lock and execute ``ops`` on ``node`` on behalf of ``att``; returns the exec result or _Fail."""
        home = att.home
        yield Hop(home, node, "remote_access")
        att.touched.add(node)
        table = self.locks[node]
        for key, mode in lock_modes(ops).items():
            if key in self.lm_hot:
                continue
            res = table.acquire(att.aid, att.ts, key, mode)
            if res == LockResult.ENQUEUED:
                granted = yield LockWait(node, att.aid)
                if not granted:
                    res = LockResult.ABORT
                else:
                    res = LockResult.GRANTED
            elif res == LockResult.GRANTED and self.config.record_history:
                att.accesses.append((key, self._stamp(), mode == LockMode.EXCLUSIVE))
            if res == LockResult.ABORT:
                yield Hop(node, home, "remote_access")
                return _Fail("lock")
        try:
            result = execute_ops(self.stores[node], att.aid, ops, acc, flag, log=self.wals[node])
        except ConstraintViolation:
            yield Sleep(self.config.op_cost * len(ops), "local_execute")
            yield Hop(node, home, "remote_access")
            return _Fail("constraint")
        for op, r in zip(ops, result.results):
            att.results[id(op)] = r
        att.cold_calls.append((node, list(ops), acc, flag))
        yield Sleep(self.config.op_cost * len(ops), "local_execute")
        yield Hop(node, home, "remote_access")
        return result

    def _execute_nodes(self, att: Attempt, ops: list[Op]):
        """Run ops on their owner nodes; parallel unless values flow across nodes."""
        if not ops:
            return (0, False)
        segments = []
        for op in ops:
            if segments and segments[-1][0] == op.node:
                segments[-1][1].append(op)
            else:
                segments.append((op.node, [op]))
        seg_of = {}
        for i, (_, seg_ops) in enumerate(segments):
            for op in seg_ops:
                seg_of.setdefault(op.key, i)
        crossing = any(
            seg_of.get(d, i) != i
            for i, (_, seg_ops) in enumerate(segments)
            for op in seg_ops
            for d in op.deps
        )
        if crossing:
            acc, flag = 0, False
            for node, seg_ops in segments:
                res = yield from self._participant(att, node, seg_ops, acc, flag)
                if isinstance(res, _Fail):
                    return res
                acc, flag = res.acc, res.flag
            return (acc, flag)
        groups: dict[int, list[Op]] = {}
        for op in ops:
            groups.setdefault(op.node, []).append(op)
        results = yield Parallel([self._participant(att, n, g, 0, False) for n, g in groups.items()])
        for r in results:
            if isinstance(r, _Fail):
                return r
        acc = sum(r.acc for r in results)
        return (acc, all(r.flag for r in results))

    def _prepare_round(self, att: Attempt, participants):
        def vote(node):
            yield Hop(att.home, node, "commit")
            att.protocol.votes[node] = True
            yield Hop(node, att.home, "commit")

        att.protocol.participants = set(participants)
        if participants:
            yield Parallel([vote(n) for n in sorted(participants)])
        att.protocol.advance(Phase.PREPARED)

    def _commit_local(self, node: int, aid: int) -> None:
        self.wals[node].log(aid, LogKind.COMMIT)
        self.stores[node].forget_undo(aid)
        self._release(node, aid)

    def _abort(self, att: Attempt) -> None:
        att.protocol.advance(Phase.ABORTED)
        home = att.home
        self.wals[home].log(att.aid, LogKind.ABORT)
        for node in sorted(att.touched | {home}):
            def undo(node=node):
                self.stores[node].rollback(att.aid)
                self._release(node, att.aid)

            if node == home:
                undo()
            else:
                self.net.send(home, node, "abort", undo)
        if att.lm_keys:
            self._lm_release(att)
        self.active.pop(att.aid, None)

    def _lm_release(self, att: Attempt) -> None:
        def unlock():
            self._wake(SWITCH, self.lm_locks.release_all(att.aid))
            self.lm_locks.forget(att.aid)

        self.net.send(att.home, SWITCH, "lm-unlock", unlock)

    # -- switch packets --------------------------------------------------------------

    def _build_packet(self, att: Attempt, ops: list[Op], acc_in: int = 0,
                      flag_in: bool = False) -> tuple[SwitchTxnPacket, list[Op]]:
        cls = classify_transaction(ops, self.plan, reorder=self.config.reorder_ops)
        if cls.kind == PassKind.NOT_OFFLOADABLE:
            raise UnsupportedShape(f"txn {att.txn.txn_id} needs {cls.pass_count} passes")
        batches = to_instructions(ops, self.plan, cls)
        ordered = [ops[i] for batch in cls.batches for i in batch]
        packet = SwitchTxnPacket(att.aid, batches, acc_in=acc_in, flag_in=flag_in)
        if cls.kind == PassKind.SINGLE_PASS:
            self.metrics.single_pass += 1
        else:
            self.metrics.multi_pass += 1
        return packet, ordered

    def _log_intent(self, att: Attempt, ordered: list[Op], acc_in: int, flag_in: bool = False) -> None:
        self.wals[att.home].log(
            att.aid,
            LogKind.SWITCH_INTENT,
            ops=[[op.key, int(op.opcode), op.operand, int(op.predicate)] for op in ordered],
            acc0=acc_in,
            flag0=int(flag_in),
        )

    def _log_result(self, att: Attempt, done) -> None:
        self.wals[att.home].log(att.aid, LogKind.SWITCH_RESULT, gid=done.gid, results=list(done.results))

    # -- transaction paths ---------------------------------------------------------------

    def _run_hot(self, att: Attempt):
        ops = list(att.txn.ops)
        packet, ordered = self._build_packet(att, ops)
        self._log_intent(att, ordered, 0)
        att.protocol.advance(Phase.SWITCH_SENT)
        done = yield SwitchCall(packet, att.home, {})
        self._log_result(att, done)
        att.completion = (done, ordered)
        for op, r in zip(ordered, done.results):
            att.results[id(op)] = r
        return None

    def _run_cold(self, att: Attempt, ops: list[Op]):
        res = yield from self._execute_nodes(att, ops)
        if isinstance(res, _Fail):
            return res
        participants = att.touched - {att.home}
        if participants:
            yield from self._prepare_round(att, participants)
        return res

    def _finish_cold(self, att: Attempt) -> None:
        home = att.home
        self._commit_local(home, att.aid)
        for node in sorted(att.touched - {home}):
            self.net.send(home, node, "commit", lambda node=node: self._commit_local(node, att.aid))

    def _run_warm(self, att: Attempt):
        ops = list(att.txn.ops)
        cold = [op for op in ops if op.key not in self.hot]
        hot = [op for op in ops if op.key in self.hot]
        res = yield from self._run_cold(att, cold)
        if isinstance(res, _Fail):
            return res
        cold_keys = {op.key for op in cold}
        if any(d in cold_keys for op in hot for d in op.deps):
            acc_in, flag_in = res
        else:
            acc_in, flag_in = 0, False
        packet, ordered = self._build_packet(att, hot, acc_in, flag_in)
        self._log_intent(att, ordered, acc_in, flag_in)
        att.protocol.advance(Phase.SWITCH_SENT)
        on_result = {
            node: (lambda node=node: self._commit_local(node, att.aid))
            for node in att.touched - {att.home}
        }
        done = yield SwitchCall(packet, att.home, on_result)
        self._log_result(att, done)
        att.completion = (done, ordered)
        for op, r in zip(ordered, done.results):
            att.results[id(op)] = r
        self._commit_local(att.home, att.aid)
        return None

    def _lm_acquire(self, att: Attempt, keys: dict):
        yield Hop(att.home, SWITCH, "lock_acquisition")
        att.lm_keys = list(keys)
        ok = True
        for key, mode in keys.items():
            entry = self.lm_locks.entries.get(key)
            full = entry is not None and len(entry.queue) >= self.config.lm_queue_depth
            res = self.lm_locks.acquire(att.aid, att.ts, key, mode)
            if res == LockResult.ENQUEUED:
                res = LockResult.GRANTED if (yield LockWait(SWITCH, att.aid)) else LockResult.ABORT
            elif res == LockResult.GRANTED and self.config.record_history:
                att.accesses.append((key, self._stamp(), mode == LockMode.EXCLUSIVE))
            if res == LockResult.ABORT:
                ok = "lm_queue" if full else "lm_lock"
                break
        yield Hop(SWITCH, att.home, "lock_acquisition")
        return ok

    def _run_lm(self, att: Attempt):
        ops = list(att.txn.ops)
        modes = {k: m for k, m in lock_modes(ops).items() if k in self.lm_hot}
        if modes:
            ok = yield from self._lm_acquire(att, modes)
            if ok is not True:
                return _Fail(ok)
        return (yield from self._run_cold(att, ops))

    # -- attempts and workers --------------------------------------------------------------

    def _attempt(self, txn: Txn, home: int):
        aid = next(self._aid)
        att = Attempt(aid, txn, home, self._timestamp(home), self.now)
        self.active[aid] = att
        mode = self.config.mode
        if mode == Mode.P4DB:
            att.cls = classify(txn, self.hot)
        elif mode == Mode.LM_SWITCH:
            att.cls = TxnClass.HOT if any(k in self.lm_hot for k in txn.keys) else TxnClass.COLD
        else:
            att.cls = TxnClass.COLD
        if mode == Mode.P4DB and att.cls == TxnClass.HOT:
            res = yield from self._run_hot(att)
        elif mode == Mode.P4DB and att.cls == TxnClass.WARM:
            res = yield from self._run_warm(att)
        elif mode == Mode.LM_SWITCH:
            res = yield from self._run_lm(att)
            if not isinstance(res, _Fail):
                self._finish_cold(att)
                if att.lm_keys:
                    self._lm_release(att)
        else:
            res = yield from self._run_cold(att, list(txn.ops))
            if not isinstance(res, _Fail):
                self._finish_cold(att)
        if isinstance(res, _Fail):
            self._abort(att)
            return att, res
        att.protocol.advance(Phase.COMMITTED)
        self.active.pop(aid, None)
        self.committed_ids.add(aid)
        return att, None

    def _may_start(self) -> bool:
        if self.end_time is not None and self.now >= self.end_time:
            return False
        if self.max_txns is not None and self.issued >= self.max_txns:
            return False
        return True

    def _in_window(self) -> bool:
        lo, hi = self.window
        return self.now >= lo and (hi is None or self.now < hi)

    def _worker(self, node: int, worker: int, me: list):
        stream = self.workload.stream(node, worker)
        rng = np.random.default_rng([self.config.seed, 7, node, worker])
        while self._may_start():
            txn = next(stream)
            self.issued += 1
            if self.config.mode == Mode.P4DB:
                try:
                    classify(txn, self.hot)
                except UnsupportedShape:
                    # rejected up front: the cold part would need a value from the switch
                    if self._in_window():
                        self.metrics.rejected += 1
                    yield Sleep(1, None)
                    continue
            while True:
                proc = me[0]
                proc.bd = dict.fromkeys(BUCKETS, 0)
                began = self.now
                att, fail = yield from self._attempt(txn, node)
                if fail is None:
                    if self._in_window():
                        self.metrics.record_commit(att.cls.value, self.now - began, proc.bd)
                    self._on_commit(att)
                    break
                if self._in_window():
                    self.metrics.record_abort(fail.cause)
                if fail.cause == "constraint":
                    if self._in_window():
                        self.metrics.logical_aborts += 1
                    break
                if not self.config.retry or (self.end_time is not None and self.now >= self.end_time):
                    break
                # backoff is not part of any latency bucket
                yield Sleep(int(rng.integers(0, self.config.backoff_max + 1)), None)

    def _on_commit(self, att: Attempt) -> None:
        txn = att.txn
        if txn.kind == "Payment" and "w" in txn.meta:
            self.ledger[("ytd", txn.meta["w"])] += txn.meta["amount"]
        balance_delta = getattr(self.workload, "balance_delta", None)
        if balance_delta is not None:
            self.ledger["delta"] += balance_delta(txn, [att.results.get(id(op), 0) for op in txn.ops])
        if self.config.record_history:
            entry = HistoryEntry(att.aid, txn, att.cls, list(att.accesses), self.now,
                                 cold_calls=list(att.cold_calls))
            if att.completion is not None:
                done, ordered = att.completion
                entry.gid = done.gid
                entry.acc_in = done.packet.acc_in
                entry.flag_in = done.packet.flag_in
                entry.switch_ops = ordered
                for op in ordered:
                    entry.accesses.append((op.key, ("gid", done.gid), op.is_write))
            self.history.append(entry)

    # -- running -------------------------------------------------------------------------

    def run(self, duration: int | None = None, max_txns: int | None = None, warmup: int = 0) -> Metrics:
        """Run the closed-loop workers.

        With ``duration`` the run stops at that time and commits in
        ``[warmup, duration)`` are counted. With ``max_txns`` workers stop
        issuing after that many transactions and the run drains.
        """
        if duration is None and max_txns is None:
            raise ValueError("give a duration or a transaction count")
        self.start(duration, max_txns, warmup)
        if duration is not None:
            self.net.run_until(duration - 1)
            self.net.now = max(self.net.now, duration)
            self.metrics.window = duration - warmup
        else:
            self.net.run_until()
            self.metrics.window = self.now - warmup
        self._collect_switch_stats()
        return self.metrics

    def start(self, duration: int | None = None, max_txns: int | None = None, warmup: int = 0) -> None:
        """Launch the workers without running the event loop."""
        self.end_time = duration
        self.max_txns = max_txns
        self.window = (warmup, duration)
        for node in range(self.nodes):
            for w in range(self.config.workers_per_node):
                me: list = []
                proc = _Proc(self._worker(node, w, me), node)
                me.append(proc)
                self._resume(proc, None)

    def drain(self) -> None:
        """Let in-flight transactions finish after a timed run; no new ones start."""
        self.net.run_until()
        self._collect_switch_stats()

    def _collect_switch_stats(self) -> None:
        s = self.switch.stats
        self.metrics.passes = s["passes"]
        self.metrics.recirculations = s["recirculations"]
        self.metrics.switch_completed = s["completed"]
        self.metrics.max_recirc_queue = s["max_recirc_queue"]

    # -- crash support ------------------------------------------------------------------------

    def crash_node(self, node: int) -> None:
        self.crashed_nodes.add(node)
        self.net.crashed.add(node)

    def crash_switch(self) -> None:
        # arrivals are still delivered so the harness can see what was lost
        self.switch_crashed = True

    def switch_oracle(self) -> dict:
        """Switch contents once every packet already sent has executed.

        Packets that reached the crashed switch are run after the ones
        still inside the pipeline, in arrival order; no replies are sent.
        """
        sw = self.switch
        for at, packet in self.lost_packets:
            sw.advance_to(max(at, sw.cycle))
            sw.submit(packet)
        sw.run_until_drained()
        return dict(sw.snapshot_registers())

"""Shared-nothing database node: tuple store, 2PL lock table and local execution."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import ConstraintViolation
from .model import Op
from .packet import Opcode, apply_opcode
from .wal import LogKind, LogRecord, WriteAheadLog


class LockMode(enum.Enum):
    SHARED = "S"
    EXCLUSIVE = "X"


class CCPolicy(enum.Enum):
    NO_WAIT = "no-wait"
    WAIT_DIE = "wait-die"


class LockResult(enum.Enum):
    GRANTED = "granted"
    ABORT = "abort"
    ENQUEUED = "enqueued"


Timestamp = tuple  # (counter, node id); smaller is older


def compatible(a: LockMode, b: LockMode) -> bool:
    return a == LockMode.SHARED and b == LockMode.SHARED


@dataclass
class _Waiter:
    txn_id: int
    ts: Timestamp
    mode: LockMode


@dataclass
class LockEntry:
    holders: dict = field(default_factory=dict)  # txn_id -> (ts, mode)
    queue: list = field(default_factory=list)

    @property
    def mode(self) -> LockMode | None:
        if not self.holders:
            return None
        if any(m == LockMode.EXCLUSIVE for _, m in self.holders.values()):
            return LockMode.EXCLUSIVE
        return LockMode.SHARED

    def grantable(self, mode: LockMode) -> bool:
        return all(compatible(m, mode) for _, m in self.holders.values())


@dataclass
class Wakeup:
    """Outcome of a release for a waiting transaction."""

    txn_id: int
    key: str
    granted: bool


class LockTable:
    """Per-key 2PL locks with NO_WAIT or WAIT_DIE conflict handling.

    A transaction requests each key once, in the strongest mode it needs, so
    upgrades never happen.
    """

    def __init__(self, policy: CCPolicy = CCPolicy.NO_WAIT, max_queue: int | None = None):
        self.policy = CCPolicy(policy)
        self.max_queue = max_queue
        self.entries: dict[str, LockEntry] = {}
        self.held: dict[int, set[str]] = {}
        self.waiting: dict[int, str] = {}
        # transactions that released something may not lock again (2PL)
        self.shrinking: set[int] = set()

    def acquire(self, txn_id: int, ts: Timestamp, key: str, mode: LockMode) -> LockResult:
        if txn_id in self.shrinking:
            raise RuntimeError(f"txn {txn_id} acquires {key} after releasing locks")
        entry = self.entries.setdefault(key, LockEntry())
        if txn_id in entry.holders:
            return LockResult.GRANTED
        if entry.grantable(mode) and (self.policy == CCPolicy.NO_WAIT or not entry.queue):
            entry.holders[txn_id] = (ts, mode)
            self.held.setdefault(txn_id, set()).add(key)
            return LockResult.GRANTED
        if self.policy == CCPolicy.NO_WAIT:
            return LockResult.ABORT
        # wait-die: an older requester waits, a younger one dies
        if self.max_queue is not None and len(entry.queue) >= self.max_queue:
            return LockResult.ABORT
        if all(ts < hts for hts, _ in entry.holders.values()) and all(ts < w.ts for w in entry.queue):
            entry.queue.append(_Waiter(txn_id, ts, mode))
            entry.queue.sort(key=lambda w: w.ts)
            self.waiting[txn_id] = key
            return LockResult.ENQUEUED
        return LockResult.ABORT

    def holders(self, key: str) -> dict:
        entry = self.entries.get(key)
        return dict(entry.holders) if entry else {}

    def release_all(self, txn_id: int) -> list[Wakeup]:
        """Drop every lock and queued request of ``txn_id``.

        Waiters are then granted oldest first while compatible. A remaining
        waiter that is younger than a new holder can never be granted under
        wait-die, so it is told to abort.
        """
        self.shrinking.add(txn_id)
        out: list[Wakeup] = []
        keys = sorted(self.held.pop(txn_id, set()))
        wkey = self.waiting.pop(txn_id, None)
        if wkey is not None:
            entry = self.entries[wkey]
            entry.queue = [w for w in entry.queue if w.txn_id != txn_id]
            keys.append(wkey)
        for key in keys:
            entry = self.entries.get(key)
            if entry is None:
                continue
            entry.holders.pop(txn_id, None)
            out.extend(self._wake(key, entry))
            if not entry.holders and not entry.queue:
                del self.entries[key]
        return out

    def _wake(self, key: str, entry: LockEntry) -> list[Wakeup]:
        out = []
        while entry.queue and entry.grantable(entry.queue[0].mode):
            w = entry.queue.pop(0)
            entry.holders[w.txn_id] = (w.ts, w.mode)
            self.held.setdefault(w.txn_id, set()).add(key)
            self.waiting.pop(w.txn_id, None)
            out.append(Wakeup(w.txn_id, key, True))
        if entry.holders:
            survivors = []
            for w in entry.queue:
                if all(w.ts < hts for hts, _ in entry.holders.values()):
                    survivors.append(w)
                else:
                    self.waiting.pop(w.txn_id, None)
                    out.append(Wakeup(w.txn_id, key, False))
            entry.queue = survivors
        return out

    def forget(self, txn_id: int) -> None:
        """Allow a txn id to start a fresh growing phase (used on retry)."""
        self.shrinking.discard(txn_id)

    def waits_for(self) -> list[tuple[int, int]]:
        edges = []
        for entry in self.entries.values():
            for w in entry.queue:
                for h in entry.holders:
                    edges.append((w.txn_id, h))
        return edges


def lock_modes(ops: Iterable[Op]) -> dict[str, LockMode]:
    """Strongest lock mode needed per key, in first-access order."""
    modes: dict[str, LockMode] = {}
    for op in ops:
        if op.is_write:
            modes[op.key] = LockMode.EXCLUSIVE
        else:
            modes.setdefault(op.key, LockMode.SHARED)
    return modes


@dataclass
class ExecResult:
    results: list[int]
    acc: int
    flag: bool


class NodeStore:
    """Key-value rows of one node, with undo information per transaction."""

    def __init__(self, node_id: int = 0, default: Callable[[str], int] | None = None):
        self.node_id = node_id
        self.rows: dict[str, int] = {}
        self.default = default or (lambda key: 0)
        self.undo: dict[int, list[tuple[str, int | None]]] = {}

    def get(self, key: str) -> int:
        if key in self.rows:
            return self.rows[key]
        return self.default(key)

    def put(self, txn_id: int, key: str, value: int) -> None:
        self.undo.setdefault(txn_id, []).append((key, self.rows.get(key)))
        self.rows[key] = value

    def rollback(self, txn_id: int) -> None:
        for key, old in reversed(self.undo.pop(txn_id, [])):
            if old is None:
                self.rows.pop(key, None)
            else:
                self.rows[key] = old

    def forget_undo(self, txn_id: int) -> None:
        self.undo.pop(txn_id, None)


def execute_ops(
    store: NodeStore,
    txn_id: int,
    ops: Iterable[Op],
    acc: int = 0,
    flag: bool = False,
    log: WriteAheadLog | None = None,
) -> ExecResult:
    """Run ops against the store with switch-identical semantics.

    A refused constrained write or conditional subtraction raises
    ConstraintViolation: on a node the transaction aborts instead of silently
    skipping the write. The store keeps undo records so the caller can roll
    back. Each write is logged as a ColdWrite after-image when ``log`` is set.
    """
    results = []
    for op in ops:
        value = store.get(op.key)
        new, result, acc, new_flag = apply_opcode(op.opcode, op.operand, op.predicate, value, acc, flag)
        if op.opcode in (Opcode.CONSTRAINED_WRITE, Opcode.SUB_IF_GEQ) and not new_flag:
            raise ConstraintViolation(f"txn {txn_id}: constraint on {op.key} fails at value {value}")
        flag = new_flag
        if op.is_write:
            store.put(txn_id, op.key, new)
            if log is not None:
                log.append(LogRecord(-1, txn_id, LogKind.COLD_WRITE, {"key": op.key, "value": new}))
        results.append(result)
    return ExecResult(results, acc, flag)


__all__ = [
    "CCPolicy",
    "ExecResult",
    "LockMode",
    "LockResult",
    "LockTable",
    "NodeStore",
    "Wakeup",
    "compatible",
    "execute_ops",
    "lock_modes",
]

"""Transaction model shared by the workloads, the planner and the executors.

Keys are strings of the form ``table:part[:part...]``. An operation names the
keys whose earlier operations it depends on (``deps``); that is what orders
tuples across stages in the layout and what stops a warm transaction from
touching a cold tuple after a hot one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .packet import Opcode, Predicate

_NUM = re.compile(r"(\d+)")


def key_order(key: str):
    """Sort key for tuple keys that orders numeric parts numerically."""
    return tuple(int(p) if p.isdigit() else p for p in _NUM.split(key))


@dataclass(frozen=True)
class Op:
    key: str
    opcode: Opcode
    operand: int = 0
    predicate: Predicate = Predicate.NONE
    deps: tuple[str, ...] = ()
    node: int = 0

    @property
    def is_read(self) -> bool:
        return self.opcode == Opcode.READ

    @property
    def is_write(self) -> bool:
        return self.opcode not in (Opcode.READ, Opcode.NOP)


@dataclass
class Txn:
    txn_id: int
    home: int
    ops: tuple[Op, ...]
    kind: str = "txn"
    # workload bookkeeping used by audits, e.g. payment amounts
    meta: dict = field(default_factory=dict)

    @property
    def keys(self) -> list[str]:
        seen = {}
        for op in self.ops:
            seen.setdefault(op.key, None)
        return list(seen)

    @property
    def nodes(self) -> set[int]:
        return {op.node for op in self.ops}

    @property
    def is_distributed(self) -> bool:
        return any(op.node != self.home for op in self.ops)

    def write_set(self) -> set[str]:
        return {op.key for op in self.ops if op.is_write}

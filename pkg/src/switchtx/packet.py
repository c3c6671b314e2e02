"""Switch transaction packets: instructions, header fields and wire encoding.

One packet carries one transaction. Its instructions are grouped into
batches, one batch per pass through the pipeline. Values are 64-bit signed
fixed-point integers; arithmetic wraps like the hardware registers do.

Wire layout (little-endian)::

    header:       txn_id u64 | is_multipass u8 | locks u16 | nb_recircs u16 | batch_count u8
    per batch:    instruction_count u8
    instruction:  stage u8 | array u8 | slot u32 | opcode u8 | operand i64 | predicate u8

``locks`` packs the two 8-bit lock counters as ``left | right << 8``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .errors import MalformedPacket

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

_HEADER = struct.Struct("<QBHHqB")
_BATCH = struct.Struct("<B")
_INSTR = struct.Struct("<BBIBqB")
_FRAME = struct.Struct("<I")


def wrap64(value: int) -> int:
    """Wrap an integer to the signed 64-bit range."""
    value &= (1 << 64) - 1
    return value - (1 << 64) if value > INT64_MAX else value


class Opcode(enum.IntEnum):
    NOP = 0
    READ = 1
    WRITE = 2
    ADD_READ = 3
    CONSTRAINED_WRITE = 4
    SUB_IF_GEQ = 5
    ADD_IF_FLAG = 6
    ADD_ACC = 7


class Predicate(enum.IntEnum):
    NONE = 0
    RESULT_NON_NEGATIVE = 1
    GEQ_OPERAND = 2


@dataclass(frozen=True)
class SwitchInstruction:
    """One stateful register operation.

    Semantics, with ``v`` the register value before the operation (which is
    also the instruction's result):

    - ``READ``: acc += v.
    - ``WRITE``: register = operand; acc += v (atomic swap).
    - ``ADD_READ``: register = v + operand.
    - ``CONSTRAINED_WRITE`` with ``RESULT_NON_NEGATIVE``: register = v + operand
      iff v + operand >= 0. With ``GEQ_OPERAND``: register = operand iff
      operand >= v (a monotone high-water write). The flag records whether
      the write happened.
    - ``SUB_IF_GEQ``: if v >= operand then register = v - operand and flag is
      set, else flag is cleared.
    - ``ADD_IF_FLAG``: register = v + operand iff the flag is set.
    - ``ADD_ACC``: register = v + acc.
    """

    stage: int
    array: int
    slot: int
    opcode: Opcode
    operand: int = 0
    predicate: Predicate = Predicate.NONE

    def __post_init__(self):
        if self.opcode == Opcode.CONSTRAINED_WRITE:
            if self.predicate == Predicate.NONE:
                raise MalformedPacket("CONSTRAINED_WRITE requires a predicate")
        elif self.predicate != Predicate.NONE:
            raise MalformedPacket(f"{self.opcode.name} does not take a predicate")

    @property
    def register(self) -> tuple[int, int]:
        return (self.stage, self.array)


def execute_instruction(instr: SwitchInstruction, value: int, acc: int, flag: bool):
    """Apply ``instr`` to a register value.

    Returns ``(new_value, result, new_acc, new_flag)``.
    """
    return apply_opcode(instr.opcode, instr.operand, instr.predicate, value, acc, flag)


def apply_opcode(op: Opcode, operand: int, predicate: Predicate, value: int, acc: int, flag: bool):
    if op == Opcode.READ:
        return value, value, wrap64(acc + value), flag
    if op == Opcode.WRITE:
        return wrap64(operand), value, wrap64(acc + value), flag
    if op == Opcode.ADD_READ:
        return wrap64(value + operand), value, acc, flag
    if op == Opcode.CONSTRAINED_WRITE:
        if predicate == Predicate.RESULT_NON_NEGATIVE:
            ok = value + operand >= 0
            return (wrap64(value + operand) if ok else value), value, acc, ok
        ok = operand >= value
        return (operand if ok else value), value, acc, ok
    if op == Opcode.SUB_IF_GEQ:
        if value >= operand:
            return wrap64(value - operand), value, acc, True
        return value, value, acc, False
    if op == Opcode.ADD_IF_FLAG:
        return (wrap64(value + operand) if flag else value), value, acc, flag
    if op == Opcode.ADD_ACC:
        return wrap64(value + acc), value, acc, flag
    return value, 0, acc, flag


@dataclass(frozen=True)
class LockRequest:
    """Pair of lock counters, as in the 2-bit pipeline lock register."""

    left: int = 0
    right: int = 0

    def encode(self) -> int:
        return (self.left & 0xFF) | ((self.right & 0xFF) << 8)

    @classmethod
    def decode(cls, raw: int) -> "LockRequest":
        return cls(raw & 0xFF, (raw >> 8) & 0xFF)

    @property
    def empty(self) -> bool:
        return self.left == 0 and self.right == 0


BOTH_LOCKS = LockRequest(1, 1)


@dataclass
class SwitchTxnPacket:
    txn_id: int
    pass_plan: list[list[SwitchInstruction]]
    is_multipass: bool = False
    locks: LockRequest = field(default_factory=LockRequest)
    nb_recircs: int = 0
    accumulator: int = 0
    flag: bool = False
    gid: int | None = None
    results: list[int] | None = None
    # set by the pipeline
    pass_index: int = 0
    meta: object = None
    # starting accumulator and flag, e.g. what the cold part of a warm txn computed
    acc_in: int = 0
    flag_in: bool = False

    def __post_init__(self):
        if self.is_multipass is False and len(self.pass_plan) > 1:
            self.is_multipass = True

    @property
    def instructions(self) -> list[SwitchInstruction]:
        return [i for batch in self.pass_plan for i in batch]

    @property
    def pass_count(self) -> int:
        return len(self.pass_plan)

    def validate(self) -> None:
        """Raise MalformedPacket unless every batch is executable in one pass."""
        if not self.pass_plan:
            raise MalformedPacket(f"txn {self.txn_id}: packet has no batches")
        for n, batch in enumerate(self.pass_plan):
            validate_batch(batch, f"txn {self.txn_id} batch {n}")
        if len(self.pass_plan) > 1 and not self.is_multipass:
            raise MalformedPacket(f"txn {self.txn_id}: several batches but is_multipass unset")


def validate_batch(batch: Iterable[SwitchInstruction], what: str = "batch") -> None:
    last_stage = -1
    seen = set()
    for instr in batch:
        if instr.register in seen:
            raise MalformedPacket(f"{what}: register {instr.register} accessed twice")
        if instr.stage <= last_stage:
            raise MalformedPacket(
                f"{what}: stage {instr.stage} after stage {last_stage} breaks placement order"
            )
        seen.add(instr.register)
        last_stage = instr.stage


def encode_packet(packet: SwitchTxnPacket) -> bytes:
    parts = [
        _HEADER.pack(
            packet.txn_id,
            int(packet.is_multipass) | (int(packet.flag_in) << 1),
            packet.locks.encode(),
            min(packet.nb_recircs, 0xFFFF),
            wrap64(packet.acc_in),
            len(packet.pass_plan),
        )
    ]
    for batch in packet.pass_plan:
        parts.append(_BATCH.pack(len(batch)))
        for i in batch:
            parts.append(
                _INSTR.pack(i.stage, i.array, i.slot, int(i.opcode), i.operand, int(i.predicate))
            )
    return b"".join(parts)


def decode_packet(data: bytes) -> SwitchTxnPacket:
    packet, used = _decode_from(data, 0)
    if used != len(data):
        raise MalformedPacket(f"{len(data) - used} trailing bytes after packet")
    return packet


def _decode_from(data: bytes, offset: int) -> tuple[SwitchTxnPacket, int]:
    try:
        txn_id, bits, locks, recircs, acc_in, nbatch = _HEADER.unpack_from(data, offset)
        offset += _HEADER.size
        plan = []
        for _ in range(nbatch):
            (count,) = _BATCH.unpack_from(data, offset)
            offset += _BATCH.size
            batch = []
            for _ in range(count):
                stage, array, slot, op, operand, pred = _INSTR.unpack_from(data, offset)
                offset += _INSTR.size
                batch.append(
                    SwitchInstruction(stage, array, slot, Opcode(op), operand, Predicate(pred))
                )
            plan.append(batch)
    except (struct.error, ValueError) as exc:
        raise MalformedPacket(f"cannot decode packet: {exc}") from exc
    packet = SwitchTxnPacket(
        txn_id=txn_id,
        pass_plan=plan,
        is_multipass=bool(bits & 1),
        locks=LockRequest.decode(locks),
        nb_recircs=recircs,
        acc_in=acc_in,
        flag_in=bool(bits & 2),
    )
    return packet, offset


def write_trace(stream: BinaryIO, packets: Iterable[SwitchTxnPacket]) -> int:
    """Write length-framed packets to a binary trace; returns the packet count."""
    n = 0
    for packet in packets:
        blob = encode_packet(packet)
        stream.write(_FRAME.pack(len(blob)))
        stream.write(blob)
        n += 1
    return n


def read_trace(stream: BinaryIO) -> Iterator[SwitchTxnPacket]:
    while True:
        head = stream.read(_FRAME.size)
        if not head:
            return
        if len(head) < _FRAME.size:
            raise MalformedPacket("truncated frame header")
        (size,) = _FRAME.unpack(head)
        blob = stream.read(size)
        if len(blob) < size:
            raise MalformedPacket("truncated packet")
        yield decode_packet(blob)

"""Per-node write-ahead log.

Records are stored as length-prefixed binary frames: a fixed header
``lsn u64 | txn u64 | kind u8 | payload_len u32`` followed by a JSON payload.
``dump_text`` renders one ``lsn,txn,kind,payload`` line per record.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .errors import InconsistentLogs

_HEAD = struct.Struct("<QQBI")


class LogKind(enum.IntEnum):
    COLD_WRITE = 1
    SWITCH_INTENT = 2
    SWITCH_RESULT = 3
    COMMIT = 4
    ABORT = 5


@dataclass
class LogRecord:
    lsn: int
    txn_id: int
    kind: LogKind
    payload: dict = field(default_factory=dict)

    def text(self) -> str:
        body = json.dumps(self.payload, sort_keys=True, separators=(",", ":"))
        return f"{self.lsn},{self.txn_id},{self.kind.name},{body}"


class WriteAheadLog:
    def __init__(self, node_id: int = 0):
        self.node_id = node_id
        self.records: list[LogRecord] = []

    def append(self, record: LogRecord) -> int:
        """Assign the next LSN to ``record`` and append it."""
        record.lsn = len(self.records)
        self.records.append(record)
        return record.lsn

    def log(self, txn_id: int, kind: LogKind, **payload) -> int:
        return self.append(LogRecord(-1, txn_id, kind, payload))

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def for_txn(self, txn_id: int) -> list[LogRecord]:
        return [r for r in self.records if r.txn_id == txn_id]

    def copy(self) -> "WriteAheadLog":
        other = WriteAheadLog(self.node_id)
        other.records = [LogRecord(r.lsn, r.txn_id, r.kind, json.loads(json.dumps(r.payload))) for r in self.records]
        return other

    def to_bytes(self) -> bytes:
        return encode_records(self.records)

    @classmethod
    def from_bytes(cls, data: bytes, node_id: int = 0) -> "WriteAheadLog":
        wal = cls(node_id)
        for rec in decode_records(data):
            if rec.lsn != len(wal.records):
                raise InconsistentLogs(f"node {node_id}: lsn {rec.lsn} out of sequence")
            wal.records.append(rec)
        return wal

    def dump_text(self) -> str:
        return "".join(r.text() + "\n" for r in self.records)


def encode_records(records: Iterable[LogRecord]) -> bytes:
    out = []
    for r in records:
        body = json.dumps(r.payload, sort_keys=True, separators=(",", ":")).encode()
        out.append(_HEAD.pack(r.lsn, r.txn_id, int(r.kind), len(body)))
        out.append(body)
    return b"".join(out)


def decode_records(data: bytes) -> Iterator[LogRecord]:
    pos = 0
    while pos < len(data):
        if pos + _HEAD.size > len(data):
            raise InconsistentLogs("torn log record header")
        lsn, txn, kind, size = _HEAD.unpack_from(data, pos)
        pos += _HEAD.size
        if pos + size > len(data):
            raise InconsistentLogs("torn log record payload")
        payload = json.loads(data[pos : pos + size])
        pos += size
        yield LogRecord(lsn, txn, LogKind(kind), payload)


def write_log(stream: BinaryIO, wal: WriteAheadLog) -> None:
    stream.write(wal.to_bytes())


def read_log(stream: BinaryIO, node_id: int = 0) -> WriteAheadLog:
    return WriteAheadLog.from_bytes(stream.read(), node_id)

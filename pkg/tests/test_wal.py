import io

import pytest
from hypothesis import given, settings, strategies as st

from switchtx.errors import InconsistentLogs
from switchtx.wal import LogKind, LogRecord, WriteAheadLog, read_log, write_log

payloads = st.dictionaries(st.sampled_from(["key", "value", "gid", "ops"]),
                           st.one_of(st.integers(-2**63, 2**63 - 1), st.text(max_size=8)), max_size=3)


def test_lsns_are_dense():
    w = WriteAheadLog(3)
    assert w.log(1, LogKind.COLD_WRITE, key="a", value=1) == 0
    assert w.log(1, LogKind.COMMIT) == 1
    assert [r.lsn for r in w] == [0, 1]
    assert len(w.for_txn(1)) == 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2**40), st.sampled_from(list(LogKind)), payloads), max_size=20))
def test_binary_round_trip(entries):
    w = WriteAheadLog(2)
    for txn, kind, payload in entries:
        w.append(LogRecord(-1, txn, kind, payload))
    buf = io.BytesIO()
    write_log(buf, w)
    buf.seek(0)
    back = read_log(buf, 2)
    assert [(r.lsn, r.txn_id, r.kind, r.payload) for r in back] == [(r.lsn, r.txn_id, r.kind, r.payload) for r in w]


def test_frame_layout():
    w = WriteAheadLog()
    w.log(7, LogKind.COMMIT)
    data = w.to_bytes()
    # lsn u64, txn u64, kind u8, len u32, then "{}"
    assert len(data) == 8 + 8 + 1 + 4 + 2
    assert data[8:16] == (7).to_bytes(8, "little")
    assert data[16] == LogKind.COMMIT


def test_torn_tail_detected():
    w = WriteAheadLog()
    w.log(1, LogKind.COLD_WRITE, key="k", value=3)
    data = w.to_bytes()
    with pytest.raises(InconsistentLogs):
        WriteAheadLog.from_bytes(data[:-1])
    with pytest.raises(InconsistentLogs):
        WriteAheadLog.from_bytes(data[:10])


def test_text_dump_columns():
    w = WriteAheadLog()
    w.log(4, LogKind.SWITCH_RESULT, gid=2, results=[1, 2])
    assert w.dump_text() == '0,4,SWITCH_RESULT,{"gid":2,"results":[1,2]}\n'


def test_copy_is_deep():
    w = WriteAheadLog()
    w.log(1, LogKind.SWITCH_INTENT, ops=[["x", 3, 1, 0]])
    c = w.copy()
    c.records[0].payload["ops"][0][2] = 99
    assert w.records[0].payload["ops"][0][2] == 1

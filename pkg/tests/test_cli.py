import csv
import subprocess
import sys

import pytest

from switchtx.cli import EXIT_AUDIT, EXIT_ERROR, main
from switchtx.packet import read_trace
from switchtx.wal import WriteAheadLog

CONFIG = """workload = smallbank
nodes = 2
workers_per_node = 2
accounts = 2000
hot_per_node = 6
duration = 20000
warmup = 2000
num_stages = 6
slots_per_array = 32
trace_size = 2000
history = true
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text(CONFIG)
    return p


def read(path):
    return list(csv.DictReader(open(path)))


def test_run_writes_csv_logs_and_packets(cfg, tmp_path):
    out = tmp_path / "r.csv"
    rc = main(["run", "--config", str(cfg), "--out", str(out), "--wal-dir", str(tmp_path / "wal"),
               "--packet-trace", str(tmp_path / "p.bin")])
    assert rc == 0
    (row,) = read(out)
    assert row["audit_ok"] == "1" and int(row["committed"]) > 0
    wal = WriteAheadLog.from_bytes((tmp_path / "wal" / "node0.wal").read_bytes())
    assert (tmp_path / "wal" / "node0.txt").read_text() == wal.dump_text()
    with open(tmp_path / "p.bin", "rb") as fh:
        assert len(list(read_trace(fh))) > 0


def test_mode_and_protocol_flags(cfg, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--mode", "lm-switch", "--protocol", "wait-die",
                 "--set", "seed=4"]) == 0
    (row,) = read(out)
    assert (row["mode"], row["protocol"], row["seed"]) == ("lm-switch", "wait-die", "4")


def test_audit_failure_gives_nonzero_exit(cfg, tmp_path, monkeypatch):
    from switchtx import bench

    real = bench.audit_cluster

    def broken(cluster):
        rep = real(cluster)
        rep.add("injected", ["forced failure"])
        return rep

    monkeypatch.setattr(bench, "audit_cluster", broken)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == EXIT_AUDIT
    (row,) = read(tmp_path / "r.csv")
    assert row["audit_ok"] == "0" and "forced failure" in row["audit_detail"]


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("nodes = lots\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "x.csv")]) == EXIT_ERROR
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "x.csv")]) == EXIT_ERROR


def test_sweep_command(cfg, tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["sweep", "--config", str(cfg), "--param", "distributed_prob", "--values", "0,1",
               "--modes", "p4db,no-switch", "--out", str(out)])
    assert rc == 0
    rows = read(out)
    assert [(r["distributed_prob"], r["mode"]) for r in rows] == [
        ("0", "p4db"), ("0", "no-switch"), ("1", "p4db"), ("1", "no-switch")]
    assert rows[1]["speedup"] == "1.0"


def test_layout_command(tmp_path):
    trace = tmp_path / "t.trace"
    trace.write_text("1 r a:1\n1 add=2 a:2 a:1\n2 r a:1\n2 r a:3\n")
    out = tmp_path / "plan.csv"
    assert main(["layout", "--trace", str(trace), "--out", str(out), "--set", "num_stages=4"]) == 0
    rows = read(out)
    assert {r["key"] for r in rows} == {"a:1", "a:2", "a:3"}
    stage = {r["key"]: int(r["stage"]) for r in rows}
    assert stage["a:1"] < stage["a:2"]


def test_crash_test_command(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["crash-test", "--runs", "3", "--out", str(out)]) == 0
    assert [r["kind"] for r in read(out)] == ["switch", "node", "combined"]


def test_module_entry_point(cfg, tmp_path):
    out = tmp_path / "r.csv"
    proc = subprocess.run([sys.executable, "-m", "switchtx", "run", "--config", str(cfg), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert read(out)[0]["workload"] == "smallbank"

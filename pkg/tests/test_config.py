import pytest

from switchtx.cluster import Mode
from switchtx.config import ExperimentConfig, load_config, parse_config
from switchtx.errors import ConfigError
from switchtx.node import CCPolicy
from switchtx.workloads import WorkloadKind


def test_defaults_round_trip_through_text():
    cfg = ExperimentConfig()
    assert parse_config(cfg.to_text()) == cfg


def test_parse_types_comments_and_sections(tmp_path):
    text = """
    # an experiment
    workload = smallbank   # trailing comment
    nodes = 4
    distributed_prob = 0.5
    fast_recirculation = no
    duration = 1e5
    """
    cfg = parse_config("\n".join(line.strip() for line in text.splitlines()))
    assert cfg.workload == "smallbank" and cfg.nodes == 4 and cfg.distributed_prob == 0.5
    assert cfg.fast_recirculation is False and cfg.duration == 100_000
    path = tmp_path / "e.cfg"
    path.write_text("[experiment]\nmode = lm-switch\n")
    assert load_config(path, seed="9").seed == 9
    assert load_config(path).mode == "lm-switch"


@pytest.mark.parametrize("text", ["bogus = 1", "nodes = many", "mode = turbo", "protocol = 2pl",
                                  "layout = clever", "warmup = 5\nduration = 5", "retry = maybe", "nodes"])
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_derived_objects():
    cfg = parse_config("workload = tpcc\nmode = no-switch\nprotocol = wait-die\nnum_stages = 6\nwarehouses = 3")
    spec = cfg.workload_spec()
    assert spec.kind == WorkloadKind.TPCC and spec.params.warehouses == 3
    cc = cfg.cluster_config()
    assert cc.mode == Mode.NO_SWITCH and cc.policy == CCPolicy.WAIT_DIE
    assert cc.switch.num_stages == 6
    assert cc.latency.node_rtt == 2000


def test_max_txns_skips_window_check():
    cfg = parse_config("max_txns = 10\nwarmup = 0\nduration = 0")
    assert cfg.max_txns == 10

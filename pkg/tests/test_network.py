import pytest
from hypothesis import given, settings, strategies as st

from switchtx.network import SWITCH, EventKind, LatencyModel, Network


def test_latency_model_defaults():
    m = LatencyModel()
    assert m.node_oneway == 1000
    assert m.switch_oneway == 500
    # a switch round trip is half a node round trip
    assert 2 * m.switch_oneway * 2 == m.node_rtt
    assert m.base(0, SWITCH) == 500
    assert m.base(3, 3) == 0


def test_latency_model_validation():
    with pytest.raises(ValueError):
        LatencyModel(node_rtt=10)
    with pytest.raises(ValueError):
        LatencyModel(jitter=-1)


def test_events_fire_in_time_then_insertion_order():
    net = Network()
    seen = []
    net.timer(5, lambda: seen.append("b"))
    net.timer(1, lambda: seen.append("a"))
    net.timer(5, lambda: seen.append("c"))
    net.run_until()
    assert seen == ["a", "b", "c"]
    assert net.now == 5


def test_run_until_stops_at_time():
    net = Network()
    seen = []
    net.timer(3, lambda: seen.append(3))
    net.timer(9, lambda: seen.append(9))
    net.run_until(5)
    assert seen == [3] and net.now == 5
    with pytest.raises(ValueError):
        net.schedule(1, EventKind.TIMER, lambda: None)


def test_crashed_endpoint_drops_messages():
    net = Network()
    got = []
    net.register(1, got.append)
    net.crashed.add(1)
    net.send(0, 1, "ping")
    net.run_until()
    assert got == [] and net.dropped == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.integers(0, 50), min_size=2, max_size=30))
def test_jitter_preserves_channel_fifo(seed, gaps):
    net = Network(LatencyModel(jitter=700, seed=seed))
    got = []
    net.register(1, lambda m: got.append(m.body))
    for i, gap in enumerate(gaps):
        net.timer(sum(gaps[: i + 1]), lambda i=i: net.send(0, 1, "m", i))
    net.run_until()
    assert got == list(range(len(gaps)))


def test_multicast_same_arrival():
    net = Network()
    arrivals = []
    for n in (1, 2, 3):
        net.register(n, lambda m, n=n: arrivals.append((n, net.now)))
    net.multicast(SWITCH, [1, 2, 3], "r")
    net.run_until()
    assert {t for _, t in arrivals} == {500}


def test_trace_digest_is_deterministic():
    def run():
        net = Network(LatencyModel(jitter=100, seed=4), trace=True)
        net.register(2, lambda m: None)
        for i in range(20):
            net.timer(i * 7, lambda: net.send(0, 2, "x"))
        net.run_until()
        return net.trace_digest(), net.trace_lines

    assert run() == run()

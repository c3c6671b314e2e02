"""Deterministic discrete-event transport.

Time is measured in switch clock ticks. The default calibration puts 1000
ticks on a one-way hop between database nodes and half of that on a hop
between a node and the switch, so a switch round trip costs half a node
round trip.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

SWITCH = -1  # endpoint id of the switch


@dataclass
class LatencyModel:
    node_rtt: int = 2000
    # bounded uniform noise added per message, in ticks
    jitter: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.node_rtt <= 0 or self.node_rtt % 4:
            raise ValueError("node_rtt must be a positive multiple of 4")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        self._rng = np.random.default_rng(self.seed)

    @property
    def node_oneway(self) -> int:
        return self.node_rtt // 2

    @property
    def switch_oneway(self) -> int:
        return self.node_rtt // 4

    def base(self, src: int, dst: int) -> int:
        if src == dst:
            return 0
        if src == SWITCH or dst == SWITCH:
            return self.switch_oneway
        return self.node_oneway

    def sample(self, src: int, dst: int) -> int:
        base = self.base(src, dst)
        if self.jitter and base:
            return base + int(self._rng.integers(0, self.jitter + 1))
        return base


class EventKind(enum.Enum):
    DELIVER = "deliver"
    SWITCH_TICK = "switch-tick"
    TIMER = "timer"


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


@dataclass
class Message:
    src: int
    dst: int
    kind: str
    body: Any = None


class Network:
    """Event queue plus message delivery with per-channel FIFO order."""

    def __init__(self, latency: LatencyModel | None = None, trace: bool = False):
        self.latency = latency or LatencyModel()
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.crashed: set[int] = set()
        self.handlers: dict[int, Callable[[Message], None]] = {}
        self._channel_last: dict[tuple[int, int], int] = {}
        self.dropped = 0
        self.processed = 0
        self._trace = [] if trace else None
        self._digest = hashlib.sha256()

    def register(self, endpoint: int, handler: Callable[[Message], None]) -> None:
        self.handlers[endpoint] = handler

    def schedule(self, time: int, kind: EventKind, payload=None) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        ev = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def timer(self, delay: int, callback: Callable[[], None]) -> Event:
        return self.schedule(self.now + delay, EventKind.TIMER, callback)

    def send(self, src: int, dst: int, kind: str, body=None, extra_delay: int = 0) -> int:
        """Schedule delivery and return the arrival time."""
        at = self.now + extra_delay + self.latency.sample(src, dst)
        # jitter must not reorder a channel
        chan = (src, dst)
        at = max(at, self._channel_last.get(chan, at))
        self._channel_last[chan] = at
        self.schedule(at, EventKind.DELIVER, Message(src, dst, kind, body))
        return at

    def multicast(self, src: int, targets, kind: str, body_for=None, extra_delay: int = 0) -> int:
        """One copy per target, all delivered at the same time."""
        targets = list(targets)
        if not targets:
            return self.now
        at = self.now + extra_delay + self.latency.sample(src, targets[0])
        for t in targets:
            at = max(at, self._channel_last.get((src, t), at))
        for t in targets:
            self._channel_last[(src, t)] = at
            body = body_for(t) if callable(body_for) else body_for
            self.schedule(at, EventKind.DELIVER, Message(src, t, kind, body))
        return at

    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> int | None:
        return self._queue[0].time if self._queue else None

    def step(self) -> Event | None:
        if not self._queue:
            return None
        ev = heapq.heappop(self._queue)
        self.now = ev.time
        self.processed += 1
        self._record(ev)
        if ev.kind == EventKind.DELIVER:
            msg = ev.payload
            if msg.dst in self.crashed or msg.dst not in self.handlers:
                self.dropped += 1
            else:
                self.handlers[msg.dst](msg)
        else:
            ev.payload()
        return ev

    def run_until(self, time: int | None = None, stop: Callable[[], bool] | None = None) -> int:
        """Process events up to and including ``time`` (or until the queue is empty)."""
        count = 0
        while self._queue:
            if time is not None and self._queue[0].time > time:
                self.now = max(self.now, time)
                break
            self.step()
            count += 1
            if stop is not None and stop():
                break
        return count

    def _record(self, ev: Event) -> None:
        if ev.kind == EventKind.DELIVER:
            m = ev.payload
            line = f"{ev.time} {ev.seq} deliver {m.src}->{m.dst} {m.kind}"
        else:
            line = f"{ev.time} {ev.seq} {ev.kind.value}"
        self._digest.update(line.encode())
        if self._trace is not None:
            self._trace.append(line)

    @property
    def trace_lines(self) -> list[str]:
        return list(self._trace or [])

    def trace_digest(self) -> str:
        return self._digest.hexdigest()

"""Cycle-level model of a PISA-style switch pipeline holding hot tuples.

Every stage owns a few register arrays. A packet occupies one stage per
cycle and moves one stage forward per tick, so packets never overtake each
other; running them this way is equivalent to running them serially in
pipeline order. Packets that need several passes take a lock in stage 0
and recirculate through a loopback port until their last pass.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .errors import CapacityExceeded, MalformedPacket, QueueOverflow, UnknownKey
from .packet import (
    BOTH_LOCKS,
    LockRequest,
    SwitchInstruction,
    SwitchTxnPacket,
    execute_instruction,
)


class LockMode(enum.Enum):
    SINGLE = "single"
    TWO_BIT = "two-bit"


@dataclass
class SwitchConfig:
    num_stages: int = 12
    arrays_per_stage: int = 2
    slots_per_array: int = 65536
    num_recirc_ports: int = 2
    lock_mode: LockMode = LockMode.TWO_BIT
    recirc_priority_threshold: int = 8
    recirc_queue_capacity: int = 4096
    # extra cycles a packet spends in the loopback port before it is eligible again
    recirc_delay: int = 0
    # dedicated loopback port for lock holders
    fast_recirculation: bool = True

    def __post_init__(self):
        if isinstance(self.lock_mode, str):
            self.lock_mode = LockMode(self.lock_mode)
        if self.num_stages < 1:
            raise ValueError("num_stages must be >= 1")
        if self.arrays_per_stage < 1 or self.slots_per_array < 1:
            raise ValueError("arrays_per_stage and slots_per_array must be >= 1")
        if self.num_recirc_ports < 2:
            raise ValueError("need at least two recirculation ports")

    @classmethod
    def full_scale(cls, **overrides) -> "SwitchConfig":
        """12 stages x 4 arrays x 17,100 slots: 820,800 eight-byte tuples."""
        kw = dict(num_stages=12, arrays_per_stage=4, slots_per_array=17_100)
        kw.update(overrides)
        return cls(**kw)

    @property
    def capacity(self) -> int:
        return self.num_stages * self.arrays_per_stage * self.slots_per_array

    def lock_side(self, stage: int) -> LockRequest:
        """Which half of the 2-bit lock guards registers of ``stage``."""
        if stage < (self.num_stages + 1) // 2:
            return LockRequest(1, 0)
        return LockRequest(0, 1)

    def locks_for(self, instructions) -> LockRequest:
        left = right = 0
        for instr in instructions:
            side = self.lock_side(instr.stage)
            left |= side.left
            right |= side.right
        return LockRequest(left, right)


@dataclass
class RegisterArray:
    stage_index: int
    array_index: int
    slots: list[int]

    @classmethod
    def zeros(cls, stage: int, array: int, size: int) -> "RegisterArray":
        return cls(stage, array, [0] * size)

    def __len__(self):
        return len(self.slots)


@dataclass
class CompletedPacket:
    packet: SwitchTxnPacket
    gid: int
    results: list[int]
    cycle: int


@dataclass
class PipelineState:
    cycle: int
    stage_occupancy: list[int | None]
    pipeline_lock: tuple[int, int]
    recirc_queues: list[int]
    admission_queue: int
    next_gid: int


class RegisterSnapshot(dict):
    """Key -> value map read from the registers.

    ``consistent`` is False when packets were still in flight.
    """

    consistent: bool = True


@dataclass
class _InFlight:
    packet: SwitchTxnPacket
    entry: int
    passenger: bool
    batch: list[SwitchInstruction] = field(default_factory=list)
    pos: int = 0
    # index of the first result of this batch within packet.results
    base: int = 0


class SwitchPipeline:
    def __init__(self, config: SwitchConfig | None = None):
        self.config = config or SwitchConfig()
        c = self.config
        self.registers = [
            [RegisterArray.zeros(s, a, c.slots_per_array) for a in range(c.arrays_per_stage)]
            for s in range(c.num_stages)
        ]
        self.plan = None
        self.cycle = 0
        self.next_gid = 0
        self.lock = [0, 0]
        self.admission_queue: deque[SwitchTxnPacket] = deque()
        self.recirc_queues: list[deque] = [deque() for _ in range(c.num_recirc_ports)]
        self._in_flight: deque[_InFlight] = deque()
        self._holders: dict[int, LockRequest] = {}
        self._route_rr = 0
        self._pick_rr = 0
        self.stats = {
            "completed": 0,
            "passes": 0,
            "recirculations": 0,
            "denied": 0,
            "multipass_completed": 0,
            "max_recirc_queue": 0,
        }

    # -- setup -------------------------------------------------------------

    def load_layout(self, plan, initial: Mapping[str, int]) -> None:
        c = self.config
        for key, (stage, array, slot) in plan.placement.items():
            if not (0 <= stage < c.num_stages and 0 <= array < c.arrays_per_stage
                    and 0 <= slot < c.slots_per_array):
                raise CapacityExceeded(
                    f"{key!r} placed at {(stage, array, slot)} outside "
                    f"{c.num_stages}x{c.arrays_per_stage}x{c.slots_per_array}"
                )
        for key in initial:
            if key not in plan.placement:
                raise UnknownKey(key)
        for stage in self.registers:
            for reg in stage:
                reg.slots[:] = [0] * len(reg.slots)
        for key, value in initial.items():
            stage, array, slot = plan.placement[key]
            self.registers[stage][array].slots[slot] = value
        self.plan = plan

    # -- packet entry ---------------------------------------------------------

    def submit(self, packet: SwitchTxnPacket) -> None:
        packet.validate()
        c = self.config
        for instr in packet.instructions:
            if not (0 <= instr.stage < c.num_stages and 0 <= instr.array < c.arrays_per_stage
                    and 0 <= instr.slot < c.slots_per_array):
                raise MalformedPacket(f"txn {packet.txn_id}: instruction outside register file")
        if packet.locks.empty:
            packet.locks = c.locks_for(packet.instructions)
        packet.pass_index = 0
        packet.accumulator = packet.acc_in
        packet.flag = packet.flag_in
        packet.results = []
        self.admission_queue.append(packet)

    # -- locking -----------------------------------------------------------------

    def try_acquire_lock(self, request: LockRequest) -> bool:
        """Test-and-set on the lock register in stage 0.

        Fails if either half would reach 2, otherwise adds the request.
        """
        if request.left + self.lock[0] == 2:
            return False
        if request.right + self.lock[1] == 2:
            return False
        self.lock[0] += request.left
        self.lock[1] += request.right
        return True

    def _locks_free(self, request: LockRequest) -> bool:
        return request.left + self.lock[0] != 2 and request.right + self.lock[1] != 2

    def _release(self, request: LockRequest) -> None:
        self.lock[0] -= request.left
        self.lock[1] -= request.right

    def _request_of(self, packet: SwitchTxnPacket) -> LockRequest:
        if self.config.lock_mode == LockMode.SINGLE:
            return BOTH_LOCKS
        return packet.locks

    # -- recirculation -------------------------------------------------------

    def route_recirculation(self, packet: SwitchTxnPacket, ready: int | None = None) -> int:
        """Put ``packet`` on a loopback port and return the port index.

        Lock holders use port 0 when fast recirculation is on; everyone else
        is spread round-robin over the remaining ports.
        """
        if ready is None:
            ready = self.cycle + 1
        ready += self.config.recirc_delay
        cap = self.config.recirc_queue_capacity
        if self.config.fast_recirculation:
            if id(packet) in self._holders:
                self.recirc_queues[0].append((ready, packet))
                self._note_queue(0)
                return 0
            ports = list(range(1, len(self.recirc_queues)))
        else:
            ports = list(range(len(self.recirc_queues)))
        for _ in range(len(ports)):
            port = ports[self._route_rr % len(ports)]
            self._route_rr += 1
            if len(self.recirc_queues[port]) < cap:
                self.recirc_queues[port].append((ready, packet))
                self._note_queue(port)
                return port
        raise QueueOverflow(f"all waiting recirculation ports full (capacity {cap})")

    def _note_queue(self, port: int) -> None:
        n = len(self.recirc_queues[port])
        if n > self.stats["max_recirc_queue"]:
            self.stats["max_recirc_queue"] = n

    # -- clock ----------------------------------------------------------------

    def _pick_candidate(self, now: int) -> SwitchTxnPacket | None:
        queues = self.recirc_queues
        if self.config.fast_recirculation and queues[0] and queues[0][0][0] <= now:
            return queues[0].popleft()[1]
        first_wait = 1 if self.config.fast_recirculation else 0
        waiting = range(first_wait, len(queues))
        threshold = self.config.recirc_priority_threshold
        best = None
        for port in waiting:
            q = queues[port]
            if q and q[0][0] <= now and q[0][1].nb_recircs >= threshold:
                if best is None or q[0][1].nb_recircs > queues[best][0][1].nb_recircs:
                    best = port
        if best is not None:
            return queues[best].popleft()[1]
        if self.admission_queue:
            return self.admission_queue.popleft()
        n = len(waiting)
        for k in range(n):
            port = waiting[(self._pick_rr + k) % n]
            q = queues[port]
            if q and q[0][0] <= now:
                self._pick_rr = (self._pick_rr + k + 1) % n
                return q.popleft()[1]
        return None

    def _has_candidate(self, now: int) -> bool:
        if self.admission_queue:
            return True
        return any(q and q[0][0] <= now for q in self.recirc_queues)

    def _admit(self, packet: SwitchTxnPacket, now: int) -> None:
        key = id(packet)
        final = packet.pass_index == packet.pass_count - 1
        if key in self._holders:
            granted = True
            if final:
                self._release(self._holders.pop(key))
        elif packet.is_multipass:
            request = self._request_of(packet)
            granted = self.try_acquire_lock(request)
            if granted:
                if final:
                    self._release(request)
                else:
                    self._holders[key] = request
        else:
            granted = self._locks_free(self._request_of(packet))
        if granted:
            batch = packet.pass_plan[packet.pass_index]
            base = len(packet.results)
            packet.results.extend([0] * len(batch))
            self._in_flight.append(_InFlight(packet, now, False, batch, 0, base))
            self.stats["passes"] += 1
        else:
            self.stats["denied"] += 1
            self._in_flight.append(_InFlight(packet, now, True))

    def _execute_stages(self, slot: _InFlight, first: int, last: int) -> None:
        """Run the slot's instructions for stages ``first..last`` inclusive."""
        batch = slot.batch
        pos = slot.pos
        packet = slot.packet
        regs = self.registers
        while pos < len(batch) and batch[pos].stage <= last:
            instr = batch[pos]
            if instr.stage >= first:
                reg = regs[instr.stage][instr.array].slots
                new, result, packet.accumulator, packet.flag = execute_instruction(
                    instr, reg[instr.slot], packet.accumulator, packet.flag
                )
                reg[instr.slot] = new
                packet.results[slot.base + pos] = result
            pos += 1
        slot.pos = pos

    def _exit(self, slot: _InFlight, now: int, out: list[CompletedPacket]) -> None:
        packet = slot.packet
        if not slot.passenger:
            packet.pass_index += 1
            if packet.pass_index >= packet.pass_count:
                gid = self.next_gid
                self.next_gid += 1
                packet.gid = gid
                self.stats["completed"] += 1
                if packet.is_multipass:
                    self.stats["multipass_completed"] += 1
                out.append(CompletedPacket(packet, gid, packet.results, now))
                return
        packet.nb_recircs += 1
        self.stats["recirculations"] += 1
        self.route_recirculation(packet, ready=now + 1)

    def tick(self) -> list[CompletedPacket]:
        """Advance one clock cycle and return packets that left the pipeline."""
        now = self.cycle
        out: list[CompletedPacket] = []
        candidate = self._pick_candidate(now)
        if candidate is not None:
            self._admit(candidate, now)
        last_stage = self.config.num_stages - 1
        for slot in self._in_flight:
            if not slot.passenger:
                stage = now - slot.entry
                self._execute_stages(slot, stage, stage)
        if self._in_flight and now - self._in_flight[0].entry == last_stage:
            self._exit(self._in_flight.popleft(), now, out)
        self.cycle = now + 1
        return out

    def advance_to(self, target: int) -> list[CompletedPacket]:
        """Run ticks until ``self.cycle == target``.

        Stretches without any admission candidate are skipped in one step;
        the register effects are identical because packets only ever meet a
        register in pipeline order.
        """
        out: list[CompletedPacket] = []
        last_stage = self.config.num_stages - 1
        while self.cycle < target:
            now = self.cycle
            if self._has_candidate(now):
                out.extend(self.tick())
                continue
            stop = target
            if self._in_flight:
                stop = min(stop, self._in_flight[0].entry + last_stage)
            for q in self.recirc_queues:
                if q:
                    stop = min(stop, q[0][0])
            if stop <= now:
                out.extend(self.tick())
                continue
            for slot in self._in_flight:
                if not slot.passenger:
                    self._execute_stages(slot, now - slot.entry, stop - 1 - slot.entry)
            self.cycle = stop
        return out

    def next_event_cycle(self) -> int | None:
        """Lower bound on the cycle at which the next packet completes, or None if idle.

        The bound is exact when a packet on its final pass is in flight.
        """
        last_stage = self.config.num_stages - 1
        if self.drained:
            return None
        for slot in self._in_flight:
            if not slot.passenger and slot.packet.pass_index == slot.packet.pass_count - 1:
                return slot.entry + last_stage
        ready = []
        if self.admission_queue:
            ready.append(self.cycle)
        ready += [q[0][0] for q in self.recirc_queues if q]
        if self._in_flight:
            ready.append(self._in_flight[0].entry + last_stage + 1 + self.config.recirc_delay)
        return max(self.cycle, min(ready)) + last_stage

    def run_until_drained(self, max_ticks: int = 10_000_000) -> list[CompletedPacket]:
        out: list[CompletedPacket] = []
        limit = self.cycle + max_ticks
        while not self.drained:
            if self.cycle >= limit:
                raise RuntimeError("pipeline did not drain")
            nxt = self.next_event_cycle()
            out.extend(self.advance_to(max(nxt, self.cycle) + 1))
        return out

    # -- inspection ----------------------------------------------------------------

    @property
    def drained(self) -> bool:
        return not (self._in_flight or self.admission_queue or any(self.recirc_queues))

    def state(self) -> PipelineState:
        occ: list[int | None] = [None] * self.config.num_stages
        for slot in self._in_flight:
            occ[self.cycle - 1 - slot.entry] = slot.packet.txn_id
        return PipelineState(
            cycle=self.cycle,
            stage_occupancy=occ,
            pipeline_lock=(self.lock[0], self.lock[1]),
            recirc_queues=[len(q) for q in self.recirc_queues],
            admission_queue=len(self.admission_queue),
            next_gid=self.next_gid,
        )

    def read_slot(self, stage: int, array: int, slot: int) -> int:
        return self.registers[stage][array].slots[slot]

    def snapshot_registers(self) -> RegisterSnapshot:
        snap = RegisterSnapshot()
        if self.plan is not None:
            for key, (stage, array, slot) in self.plan.placement.items():
                snap[key] = self.registers[stage][array].slots[slot]
        snap.consistent = self.drained
        return snap

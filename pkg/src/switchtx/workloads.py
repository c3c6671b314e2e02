"""Seeded transaction generators for YCSB, SmallBank and TPC-C.

Every generator produces :class:`~switchtx.model.Txn` objects whose full
access set is known before execution. Tuple ownership is encoded in each
op's ``node`` field. Streams are split per (node, worker) from one seed so a
run is reproducible regardless of how the workers interleave.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError
from .model import Op, Txn
from .packet import Opcode, Predicate


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"{name}={p} is not a probability")


# -- YCSB ------------------------------------------------------------------------

YCSB_WRITE_PROB = {"A": 0.5, "B": 0.05, "C": 0.0}


@dataclass
class YCSBSpec:
    variant: str = "A"
    table_size: int = 1_000_000
    hot_per_node: int = 50
    hot_access_prob: float = 0.75
    ops_per_txn: int = 8
    # "txn": a transaction is all-hot with hot_access_prob, else all-cold.
    # "op": every op independently picks a hot key with hot_access_prob.
    hot_mode: str = "txn"

    def __post_init__(self):
        self.variant = str(self.variant).upper()
        if self.variant not in YCSB_WRITE_PROB:
            raise ConfigError(f"unknown YCSB variant {self.variant!r}")
        if self.hot_mode not in ("txn", "op"):
            raise ConfigError(f"unknown hot_mode {self.hot_mode!r}")
        _check_prob("hot_access_prob", self.hot_access_prob)


# -- SmallBank --------------------------------------------------------------------

SMALLBANK_TYPES = (
    "Balance",
    "DepositChecking",
    "TransactSavings",
    "Amalgamate",
    "WriteCheck",
    "Payment",
)


@dataclass
class SmallBankSpec:
    accounts: int = 100_000
    hot_per_node: int = 10
    hot_txn_prob: float = 0.90
    mix: tuple = (1, 1, 1, 1, 1, 1)
    initial_balance: int = 10_000
    max_amount: int = 100
    # hot accounts act either as payer (even rank) or payee (odd rank) in
    # two-account transactions, so dependencies between them never form cycles
    pair_mode: str = "ordered"

    def __post_init__(self):
        _check_prob("hot_txn_prob", self.hot_txn_prob)
        if len(self.mix) != len(SMALLBANK_TYPES) or sum(self.mix) <= 0:
            raise ConfigError("SmallBank mix needs six non-negative weights")
        if self.pair_mode not in ("ordered", "uniform"):
            raise ConfigError(f"unknown pair_mode {self.pair_mode!r}")


# -- TPC-C ------------------------------------------------------------------------


@dataclass
class TPCCSpec:
    warehouses: int = 8
    districts: int = 10
    customers: int = 300
    items: int = 10_000
    # number of most ordered items whose stock is designated hot per warehouse
    hot_stock: int = 20
    # share of NewOrder items drawn from the popular items
    popular_item_prob: float = 0.5
    remote_prob: float = 0.01
    payment_remote_prob: float = 0.15
    new_order_share: float = 0.5
    initial_stock: int = 1_000_000
    initial_ytd: int = 300_000

    def __post_init__(self):
        if self.warehouses < 1:
            raise ConfigError("TPC-C needs at least one warehouse")
        for name in ("popular_item_prob", "remote_prob", "payment_remote_prob", "new_order_share"):
            _check_prob(name, getattr(self, name))


class WorkloadKind(enum.Enum):
    YCSB = "ycsb"
    SMALLBANK = "smallbank"
    TPCC = "tpcc"


@dataclass
class WorkloadSpec:
    kind: WorkloadKind = WorkloadKind.YCSB
    params: object = None
    nodes: int = 8
    workers_per_node: int = 8
    distributed_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.kind = WorkloadKind(self.kind)
        if self.params is None:
            self.params = {WorkloadKind.YCSB: YCSBSpec, WorkloadKind.SMALLBANK: SmallBankSpec,
                           WorkloadKind.TPCC: TPCCSpec}[self.kind]()
        if self.nodes < 1 or self.workers_per_node < 1:
            raise ConfigError("need at least one node and one worker")
        _check_prob("distributed_prob", self.distributed_prob)


# -- generators ---------------------------------------------------------------------


class Workload:
    """Base class: per-worker streams, initial values and audit helpers."""

    name = "workload"

    def __init__(self, spec: WorkloadSpec):
        self.spec = spec
        self.nodes = spec.nodes

    def rng_for(self, node: int, worker: int, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.spec.seed, stream, node, worker])

    def stream(self, node: int, worker: int, stream: int = 0) -> Iterator[Txn]:
        rng = self.rng_for(node, worker, stream)
        for n in itertools.count():
            yield self.generate(rng, node, uid=f"{stream}.{node}.{worker}.{n}")

    def trace(self, count: int, stream: int = 1) -> list[Txn]:
        """A representative trace, round-robin over home nodes."""
        rngs = [self.rng_for(n, 0, stream) for n in range(self.nodes)]
        out = []
        for i in range(count):
            node = i % self.nodes
            txn = self.generate(rngs[node], node, uid=f"t{stream}.{i}")
            txn.txn_id = i
            out.append(txn)
        return out

    def generate(self, rng, home: int, uid: str) -> Txn:
        raise NotImplementedError

    def initial_value(self, key: str) -> int:
        return 0

    def nominal_hot_keys(self) -> list[str]:
        return []


class YCSB(Workload):
    name = "ycsb"

    def __init__(self, spec: WorkloadSpec):
        super().__init__(spec)
        p: YCSBSpec = spec.params
        self.p = p
        self.write_prob = YCSB_WRITE_PROB[p.variant]
        self.hot_count = min(p.hot_per_node * self.nodes, p.table_size)
        if p.ops_per_txn > p.hot_per_node and p.hot_access_prob > 0:
            raise ConfigError("ops_per_txn exceeds the per-node hot set")

    def owner(self, i: int) -> int:
        return i % self.nodes

    def nominal_hot_keys(self) -> list[str]:
        return [f"ycsb:{i}" for i in range(self.hot_count)]

    def _hot_ids(self, rng, node_of_op) -> list[int]:
        # hot rows of node n are n, n + nodes, n + 2*nodes, ...
        per = self.p.hot_per_node
        out = []
        used = set()
        for node in node_of_op:
            while True:
                j = int(rng.integers(per))
                i = node + self.nodes * j
                if i < self.p.table_size and i not in used:
                    break
            used.add(i)
            out.append(i)
        return out

    def _cold_ids(self, rng, node_of_op, used) -> list[int]:
        rows_per_node = self.p.table_size // self.nodes
        hot_rows = self.p.hot_per_node
        out = []
        for node in node_of_op:
            while True:
                j = int(rng.integers(hot_rows, rows_per_node))
                i = node + self.nodes * j
                if i not in used:
                    break
            used.add(i)
            out.append(i)
        return out

    def generate(self, rng, home: int, uid: str) -> Txn:
        p = self.p
        n = p.ops_per_txn
        distributed = self.nodes > 1 and rng.random() < self.spec.distributed_prob
        if distributed:
            nodes = [int(x) for x in rng.integers(self.nodes, size=n)]
            if all(x == home for x in nodes):
                nodes[-1] = (home + 1 + int(rng.integers(self.nodes - 1))) % self.nodes
        else:
            nodes = [home] * n
        if p.hot_mode == "txn":
            hot_flags = [rng.random() < p.hot_access_prob] * n
        else:
            hot_flags = list(rng.random(n) < p.hot_access_prob)
        hot_nodes = [x for x, h in zip(nodes, hot_flags) if h]
        cold_nodes = [x for x, h in zip(nodes, hot_flags) if not h]
        hot_ids = iter(self._hot_ids(rng, hot_nodes))
        cold_ids = iter(self._cold_ids(rng, cold_nodes, set()))
        writes = rng.random(n) < self.write_prob
        values = rng.integers(1, 1 << 31, size=n)
        ops = []
        for k in range(n):
            i = next(hot_ids) if hot_flags[k] else next(cold_ids)
            key = f"ycsb:{i}"
            if writes[k]:
                ops.append(Op(key, Opcode.WRITE, int(values[k]), node=self.owner(i)))
            else:
                ops.append(Op(key, Opcode.READ, node=self.owner(i)))
        return Txn(0, home, tuple(ops), kind="ycsb", meta={"uid": uid, "hot": bool(hot_flags[0]) if p.hot_mode == "txn" else None})


class SmallBank(Workload):
    name = "smallbank"

    def __init__(self, spec: WorkloadSpec):
        super().__init__(spec)
        self.p: SmallBankSpec = spec.params
        self.hot_count = min(self.p.hot_per_node * self.nodes, self.p.accounts)
        w = np.asarray(self.p.mix, dtype=float)
        self.mix = w / w.sum()

    def owner(self, account: int) -> int:
        return account % self.nodes

    def nominal_hot_keys(self) -> list[str]:
        return [f"{t}:{a}" for a in range(self.hot_count) for t in ("sav", "chk")]

    def initial_value(self, key: str) -> int:
        return self.p.initial_balance

    def _hot_account(self, rng, node: int, role: str | None) -> int:
        per = self.p.hot_per_node
        ranks = list(range(per))
        if role is not None and self.p.pair_mode == "ordered" and per >= 2:
            ranks = [r for r in ranks if (r % 2 == 0) == (role == "payer")]
        return node + self.nodes * ranks[int(rng.integers(len(ranks)))]

    def _cold_account(self, rng, node: int) -> int:
        per_node = self.p.accounts // self.nodes
        j = int(rng.integers(self.p.hot_per_node, per_node))
        return node + self.nodes * j

    def generate(self, rng, home: int, uid: str) -> Txn:
        p = self.p
        kind = SMALLBANK_TYPES[int(rng.choice(len(SMALLBANK_TYPES), p=self.mix))]
        hot = rng.random() < p.hot_txn_prob
        two = kind in ("Amalgamate", "Payment")
        other = home
        if two and self.nodes > 1 and rng.random() < self.spec.distributed_prob:
            other = (home + 1 + int(rng.integers(self.nodes - 1))) % self.nodes
        if hot:
            a = self._hot_account(rng, home, "payer" if two else None)
            b = self._hot_account(rng, other, "payee") if two else None
            while two and b == a:
                b = self._hot_account(rng, other, None)
        else:
            a = self._cold_account(rng, home)
            b = self._cold_account(rng, other) if two else None
            while two and b == a:
                b = self._cold_account(rng, other)
        amount = int(rng.integers(1, p.max_amount + 1))
        ops = self.ops_for(kind, a, b, amount, rng)
        return Txn(0, home, tuple(ops), kind=kind, meta={"uid": uid, "amount": amount})

    def ops_for(self, kind: str, a: int, b: int | None, amount: int, rng=None) -> list[Op]:
        sa, ca = f"sav:{a}", f"chk:{a}"
        na = self.owner(a)
        if kind == "Balance":
            return [Op(sa, Opcode.READ, node=na), Op(ca, Opcode.READ, node=na)]
        if kind == "DepositChecking":
            return [Op(ca, Opcode.ADD_READ, amount, node=na)]
        if kind == "TransactSavings":
            # withdrawals are refused if they would overdraw the account
            delta = amount if rng is None or rng.random() < 0.5 else -amount
            return [Op(sa, Opcode.CONSTRAINED_WRITE, delta, Predicate.RESULT_NON_NEGATIVE, node=na)]
        if kind == "WriteCheck":
            return [
                Op(sa, Opcode.READ, node=na),
                Op(ca, Opcode.CONSTRAINED_WRITE, -amount, Predicate.RESULT_NON_NEGATIVE, deps=(sa,), node=na),
            ]
        cb = f"chk:{b}"
        nb = self.owner(b)
        if kind == "Amalgamate":
            return [
                Op(sa, Opcode.WRITE, 0, node=na),
                Op(ca, Opcode.WRITE, 0, node=na),
                Op(cb, Opcode.ADD_ACC, node=nb, deps=(sa, ca)),
            ]
        if kind == "Payment":
            return [
                Op(ca, Opcode.SUB_IF_GEQ, amount, node=na),
                Op(cb, Opcode.ADD_IF_FLAG, amount, node=nb, deps=(ca,)),
            ]
        raise ConfigError(f"unknown SmallBank transaction {kind!r}")

    @staticmethod
    def balance_delta(txn: Txn, results: Sequence[int]) -> int:
        """Net change of total money caused by a committed transaction."""
        kind = txn.kind
        if kind == "DepositChecking":
            return txn.ops[0].operand
        if kind == "TransactSavings":
            op = txn.ops[0]
            return op.operand if results[0] + op.operand >= 0 else 0
        if kind == "WriteCheck":
            op = txn.ops[1]
            return op.operand if results[1] + op.operand >= 0 else 0
        return 0


class TPCC(Workload):
    name = "tpcc"

    def __init__(self, spec: WorkloadSpec):
        super().__init__(spec)
        self.p: TPCCSpec = spec.params
        if self.p.hot_stock > self.p.items:
            raise ConfigError("hot_stock exceeds the item count")

    def owner(self, w: int) -> int:
        return w % self.nodes

    def nominal_hot_keys(self) -> list[str]:
        p = self.p
        keys = []
        for w in range(p.warehouses):
            keys.append(f"w_ytd:{w}")
            for d in range(p.districts):
                keys += [f"d_next:{w}:{d}", f"d_ytd:{w}:{d}"]
            keys += [f"s_qty:{w}:{i}" for i in range(p.hot_stock)]
        return keys

    def initial_value(self, key: str) -> int:
        table = key.split(":", 1)[0]
        p = self.p
        return {
            "w_ytd": p.initial_ytd,
            "d_ytd": p.initial_ytd // 10,
            "d_next": 3001,
            "s_qty": p.initial_stock,
            "w_tax": 10,
            "c_disc": 5,
        }.get(table, 0)

    def _home_warehouse(self, rng, home: int) -> int:
        mine = list(range(home, self.p.warehouses, self.nodes))
        if not mine:
            return int(rng.integers(self.p.warehouses))
        return mine[int(rng.integers(len(mine)))]

    def _remote_warehouse(self, rng, w: int) -> int:
        W = self.p.warehouses
        if W == 1:
            return w
        return (w + 1 + int(rng.integers(W - 1))) % W

    def _item(self, rng) -> int:
        p = self.p
        if rng.random() < p.popular_item_prob:
            return int(rng.integers(p.hot_stock))
        return int(rng.integers(p.hot_stock, p.items))

    def generate(self, rng, home: int, uid: str) -> Txn:
        p = self.p
        w = self._home_warehouse(rng, home)
        d = int(rng.integers(p.districts))
        c = int(rng.integers(p.customers))
        forced_remote = self.nodes > 1 and p.warehouses > 1 and rng.random() < self.spec.distributed_prob
        if rng.random() < p.new_order_share:
            return self._new_order(rng, home, w, d, c, uid, forced_remote)
        return self._payment(rng, home, w, d, c, uid, forced_remote)

    def _new_order(self, rng, home, w, d, c, uid, forced_remote) -> Txn:
        p = self.p
        nw = self.owner(w)
        count = int(rng.integers(5, 16))
        items = set()
        while len(items) < count:
            items.add(self._item(rng))
        items = sorted(items)
        supply = [self._remote_warehouse(rng, w) if rng.random() < p.remote_prob else w for _ in items]
        if forced_remote and all(s == w for s in supply):
            supply[int(rng.integers(len(supply)))] = self._remote_warehouse(rng, w)
        qty = [int(q) for q in rng.integers(1, 11, size=len(items))]
        ops = [
            Op(f"w_tax:{w}", Opcode.READ, node=nw),
            Op(f"c_disc:{w}:{d}:{c}", Opcode.READ, node=nw),
            Op(f"d_next:{w}:{d}", Opcode.ADD_READ, 1, node=nw),
            Op(f"order:{uid}", Opcode.WRITE, 1, node=nw),
        ]
        for n, (i, sw, q) in enumerate(zip(items, supply, qty)):
            ops.append(Op(f"s_qty:{sw}:{i}", Opcode.ADD_READ, -q, node=self.owner(sw)))
            ops.append(Op(f"ol:{uid}:{n}", Opcode.WRITE, i, node=nw))
        return Txn(0, home, tuple(ops), kind="NewOrder", meta={"uid": uid, "w": w, "d": d})

    def _payment(self, rng, home, w, d, c, uid, forced_remote) -> Txn:
        p = self.p
        nw = self.owner(w)
        amount = int(rng.integers(1, 5001))
        cw = w
        if forced_remote or rng.random() < p.payment_remote_prob:
            cw = self._remote_warehouse(rng, w)
        cd = int(rng.integers(p.districts))
        ops = [
            Op(f"w_ytd:{w}", Opcode.ADD_READ, amount, node=nw),
            Op(f"d_ytd:{w}:{d}", Opcode.ADD_READ, amount, node=nw),
            Op(f"c_bal:{cw}:{cd}:{c}", Opcode.ADD_READ, -amount, node=self.owner(cw)),
            Op(f"hist:{uid}", Opcode.WRITE, amount, node=nw),
        ]
        return Txn(0, home, tuple(ops), kind="Payment", meta={"uid": uid, "w": w, "amount": amount})


def make_workload(spec: WorkloadSpec) -> Workload:
    return {WorkloadKind.YCSB: YCSB, WorkloadKind.SMALLBANK: SmallBank, WorkloadKind.TPCC: TPCC}[spec.kind](spec)


def gen_ycsb(spec: WorkloadSpec, rng: np.random.Generator, count: int, home: int = 0) -> list[Txn]:
    w = YCSB(spec)
    return [_numbered(w.generate(rng, home, f"y{n}"), n) for n in range(count)]


def gen_smallbank(spec: WorkloadSpec, rng: np.random.Generator, count: int, home: int = 0) -> list[Txn]:
    w = SmallBank(spec)
    return [_numbered(w.generate(rng, home, f"s{n}"), n) for n in range(count)]


def gen_tpcc(spec: WorkloadSpec, rng: np.random.Generator, count: int, home: int = 0) -> list[Txn]:
    w = TPCC(spec)
    return [_numbered(w.generate(rng, home, f"c{n}"), n) for n in range(count)]


def _numbered(txn: Txn, n: int) -> Txn:
    txn.txn_id = n
    return txn


# -- trace files -------------------------------------------------------------------


def write_trace_file(stream, txns: Sequence[Txn]) -> None:
    """One op per line: ``txnid op key [dep_key ...]``; the lines of a txn are adjacent."""
    for txn in txns:
        for op in txn.ops:
            parts = [str(txn.txn_id), _op_token(op), op.key, *op.deps]
            stream.write(" ".join(parts) + "\n")


def _op_token(op: Op) -> str:
    name = op.opcode.name.lower()
    if op.opcode == Opcode.CONSTRAINED_WRITE:
        name += "/" + op.predicate.name.lower()
    if op.operand:
        name += f"={op.operand}"
    return name


def read_trace_file(stream) -> list[Txn]:
    """Parse the text trace format; blank lines and ``#`` comments are skipped."""
    grouped: dict[str, list[Op]] = {}
    for lineno, line in enumerate(stream, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ConfigError(f"trace line {lineno}: expected 'txnid op key [dep_key]'")
        tid, token, key, *deps = parts
        grouped.setdefault(tid, []).append(_parse_op(token, key, tuple(deps), lineno))
    out = []
    for n, (tid, ops) in enumerate(grouped.items()):
        txn_id = int(tid) if tid.isdigit() else n
        out.append(Txn(txn_id, 0, tuple(ops)))
    return out


_ALIASES = {"r": "read", "w": "write", "add": "add_read", "rmw": "add_read"}


def _parse_op(token: str, key: str, deps: tuple, lineno: int) -> Op:
    name, _, operand = token.partition("=")
    name, _, pred = name.lower().partition("/")
    name = _ALIASES.get(name, name)
    try:
        opcode = Opcode[name.upper()]
        predicate = Predicate[pred.upper()] if pred else Predicate.NONE
        if opcode == Opcode.CONSTRAINED_WRITE and not pred:
            predicate = Predicate.RESULT_NON_NEGATIVE
        value = int(operand) if operand else 0
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"trace line {lineno}: bad op {token!r}") from exc
    return Op(key, opcode, value, predicate, deps)

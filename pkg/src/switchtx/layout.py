"""Declustered placement of hot tuples onto pipeline stages.

The planner builds a co-access graph over hot tuples, splits it with a
size-constrained max-cut so that tuples used by the same transaction land in
different register arrays, orders the parts by the access dependencies that
cross them, and maps them onto stages. Transactions are then split into
pipeline passes against the resulting layout.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
from scipy import sparse

from .errors import CapacityExceeded, Infeasible, UnknownKey
from .model import Op, Txn, key_order
from .packet import SwitchInstruction

_EPS = 1e-9


# -- hot-set detection ----------------------------------------------------------


def detect_hot_set(trace: Iterable[Txn], budget: int, min_count: int = 1) -> list[str]:
    """The ``budget`` most accessed keys, most frequent first.

    Every operation counts as one access. Ties go to the smaller key. Keys
    seen fewer than ``min_count`` times are never reported.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget == 0:
        return []
    counts: Counter[str] = Counter()
    for txn in trace:
        for op in txn.ops:
            counts[op.key] += 1
    ranked = sorted(
        (k for k, c in counts.items() if c >= min_count),
        key=lambda k: (-counts[k], key_order(k)),
    )
    return ranked[:budget]


def select_offload_set(trace: Sequence[Txn], budget: int, min_count: int = 1) -> list[str]:
    """Frequent keys to offload, preferring whole transactions when they do not all fit.

    If every key seen at least ``min_count`` times fits in ``budget`` this is
    :func:`detect_hot_set`. Otherwise keys are peeled off one at a time,
    always the key whose removal leaves the fewest trace transactions no
    longer fully offloaded (ties: the least frequent key). Removing half of a
    transaction's keys only turns it warm, which costs a switch round trip
    without sparing its node locks, so the peeling tends to drop whole groups
    of co-accessed keys and keep others complete.
    """
    ranked = detect_hot_set(trace, 1 << 62, min_count)
    if len(ranked) <= budget:
        return ranked
    if budget <= 0:
        return []
    rank = {k: i for i, k in enumerate(ranked)}
    txn_keys = []
    for txn in trace:
        keys = {op.key for op in txn.ops}
        if keys and all(k in rank for k in keys):
            txn_keys.append(keys)
    by_key: dict[str, list[int]] = defaultdict(list)
    for t, keys in enumerate(txn_keys):
        for k in keys:
            by_key[k].append(t)
    covered = [True] * len(txn_keys)
    cost = {k: len(by_key[k]) for k in ranked}
    heap = [(cost[k], -rank[k], k) for k in ranked]
    heapq.heapify(heap)
    alive = set(ranked)
    while len(alive) > budget:
        c, _, k = heapq.heappop(heap)
        if k not in alive or c != cost[k]:
            continue
        alive.discard(k)
        for t in by_key[k]:
            if not covered[t]:
                continue
            covered[t] = False
            for other in txn_keys[t]:
                if other in alive:
                    cost[other] -= 1
                    heapq.heappush(heap, (cost[other], -rank[other], other))
    return [k for k in ranked if k in alive]


def find_cooffload_keys(trace: Iterable[Txn], hot: Iterable[str]) -> set[str]:
    """Cold keys whose operations depend on a hot key in some transaction.

    Such a transaction would have to touch a cold tuple after the switch has
    run, so these keys are offloaded together with the hot set.
    """
    hot = set(hot)
    extra: set[str] = set()
    changed = True
    txns = list(trace)
    while changed:
        changed = False
        for txn in txns:
            for op in txn.ops:
                if op.key in hot or op.key in extra:
                    continue
                if any(d in hot or d in extra for d in op.deps):
                    extra.add(op.key)
                    changed = True
    return extra


# -- access graph -----------------------------------------------------------------


class Direction(enum.Enum):
    FORWARD = "forward"
    BIDIRECTIONAL = "bidirectional"


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    weight: int
    direction: Direction


@dataclass
class AccessGraph:
    """Weighted co-access graph over hot tuples.

    ``weight[(u, v)]`` (with ``u`` ordered before ``v``) counts transactions
    touching both tuples. ``forward[(u, v)]`` counts transactions in which an
    operation on ``v`` depends on an earlier one on ``u``.
    """

    nodes: list[str] = field(default_factory=list)
    weight: dict[tuple[str, str], int] = field(default_factory=dict)
    forward: dict[tuple[str, str], int] = field(default_factory=dict)

    def pair_weight(self, u: str, v: str) -> int:
        return self.weight.get(_pair(u, v), 0)

    def edges(self) -> list[Edge]:
        out = []
        for (u, v), w in sorted(self.weight.items(), key=lambda kv: (key_order(kv[0][0]), key_order(kv[0][1]))):
            fuv = self.forward.get((u, v), 0)
            fvu = self.forward.get((v, u), 0)
            if fuv:
                out.append(Edge(u, v, fuv, Direction.FORWARD))
            if fvu:
                out.append(Edge(v, u, fvu, Direction.FORWARD))
            if w - fuv - fvu > 0:
                out.append(Edge(u, v, w - fuv - fvu, Direction.BIDIRECTIONAL))
        return out

    def matrices(self):
        """Index map plus sparse (co-access, dependency) matrices."""
        index = {k: i for i, k in enumerate(self.nodes)}
        n = len(self.nodes)
        rows, cols, vals = [], [], []
        for (u, v), w in self.weight.items():
            i, j = index[u], index[v]
            rows += [i, j]
            cols += [j, i]
            vals += [w, w]
        co = sparse.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(n, n))
        rows, cols, vals = [], [], []
        for (u, v), w in self.forward.items():
            rows.append(index[u])
            cols.append(index[v])
            vals.append(w)
        dep = sparse.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(n, n))
        return index, co, dep


def _pair(u: str, v: str) -> tuple[str, str]:
    return (u, v) if key_order(u) <= key_order(v) else (v, u)


def build_access_graph(trace: Iterable[Txn], hot: Iterable[str] | None = None) -> AccessGraph:
    hot_set = set(hot) if hot is not None else None
    weight: Counter = Counter()
    forward: Counter = Counter()
    nodes: set[str] = set(hot_set) if hot_set is not None else set()
    for txn in trace:
        keys = []
        seen = set()
        for op in txn.ops:
            if hot_set is not None and op.key not in hot_set:
                continue
            if op.key not in seen:
                seen.add(op.key)
                keys.append(op.key)
        nodes.update(keys)
        for a in range(len(keys)):
            for b in range(a + 1, len(keys)):
                weight[_pair(keys[a], keys[b])] += 1
        deps = set()
        for op in txn.ops:
            if op.key not in seen:
                continue
            for d in op.deps:
                if d in seen and d != op.key:
                    deps.add((d, op.key))
        for e in deps:
            forward[e] += 1
    return AccessGraph(sorted(nodes, key=key_order), dict(weight), dict(forward))


# -- max-cut -------------------------------------------------------------------------


class _PartitionState:
    """Node-to-partition weights kept up to date under moves."""

    def __init__(self, co, dep, k: int, directed: bool):
        self.co = co
        self.dep = dep
        self.dep_t = dep.T.tocsr()
        self.directed = directed
        self.k = k
        n = co.shape[0]
        self.n = n
        self.assign = np.full(n, -1, dtype=int)
        self.sizes = np.zeros(k, dtype=int)
        if directed:
            free = (co - dep - dep.T).tocsr()
            free.eliminate_zeros()
            self.free = free
        else:
            self.free = co
        self.to_part = np.zeros((n, k))
        self.dep_out = np.zeros((n, k))
        self.dep_in = np.zeros((n, k))
        self.placed_deg = np.zeros(n)

    def _row(self, m, i):
        start, end = m.indptr[i], m.indptr[i + 1]
        return m.indices[start:end], m.data[start:end]

    def place(self, i: int, q: int) -> None:
        old = self.assign[i]
        cols, vals = self._row(self.free, i)
        if old >= 0:
            self.to_part[cols, old] -= vals
            self.sizes[old] -= 1
        else:
            self.placed_deg[cols] += vals
        self.to_part[cols, q] += vals
        if self.directed:
            # i -> j dependencies show up as incoming for j, and vice versa
            cols, vals = self._row(self.dep, i)
            if old >= 0:
                self.dep_in[cols, old] -= vals
            else:
                self.placed_deg[cols] += vals
            self.dep_in[cols, q] += vals
            cols, vals = self._row(self.dep_t, i)
            if old >= 0:
                self.dep_out[cols, old] -= vals
            else:
                self.placed_deg[cols] += vals
            self.dep_out[cols, q] += vals
        self.assign[i] = q
        self.sizes[q] += 1

    def scores(self, i: int) -> np.ndarray:
        """Satisfied weight of i's placed pairs for each candidate partition."""
        s = self.placed_deg[i] - self.to_part[i]
        if self.directed:
            free_deg = self.to_part[i].sum()
            s = free_deg - self.to_part[i]
            out = self.dep_out[i]
            inc = self.dep_in[i]
            # deps i -> j satisfied when part(j) > q; j -> i when part(j) < q
            after = np.concatenate([np.cumsum(out[::-1])[::-1][1:], [0.0]])
            before = np.concatenate([[0.0], np.cumsum(inc)[:-1]])
            s = s + after + before
        return s

    def all_scores(self) -> np.ndarray:
        if not self.directed:
            return self.placed_deg[:, None] - self.to_part
        free_deg = self.to_part.sum(axis=1, keepdims=True)
        after = np.zeros_like(self.dep_out)
        after[:, :-1] = np.cumsum(self.dep_out[:, ::-1], axis=1)[:, ::-1][:, 1:]
        before = np.zeros_like(self.dep_in)
        before[:, 1:] = np.cumsum(self.dep_in, axis=1)[:, :-1]
        return free_deg - self.to_part + after + before


def _objective(co, dep, assign: np.ndarray, directed: bool) -> float:
    coo = sparse.triu(co, k=1).tocoo()
    cut = float(coo.data[assign[coo.row] != assign[coo.col]].sum())
    if not directed:
        return cut
    d = dep.tocoo()
    a, b = assign[d.row], assign[d.col]
    # dependency pairs count only when ordered the right way
    both = dep + dep.T
    bc = sparse.triu(both, k=1).tocoo()
    dep_cut = float(bc.data[assign[bc.row] != assign[bc.col]].sum())
    return cut - dep_cut + float(d.data[a < b].sum())


def cut_weight(graph: AccessGraph, partition_of: Mapping[str, int]) -> int:
    """Sum of co-access weights between different partitions, ignoring direction."""
    return sum(w for (u, v), w in graph.weight.items() if partition_of[u] != partition_of[v])


def random_balanced_partition(nodes: Sequence[str], num_partitions: int, seed: int) -> dict[str, int]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(nodes))
    return {nodes[p]: t % num_partitions for t, p in enumerate(perm)}


def _local_search(state: _PartitionState, cap: int, order: np.ndarray, max_rounds: int) -> None:
    # swapping i and j misjudges their shared pair by this much in the per-node scores
    pair = 2.0 * state.free
    if state.directed:
        pair = pair + state.dep + state.dep_t
    pair = pair.tocsr()
    for _ in range(max_rounds):
        improved = False
        for i in order:
            p = state.assign[i]
            s = state.scores(i)
            gain = s - s[p]
            gain[state.sizes >= cap] = -np.inf
            gain[p] = -np.inf
            q = int(np.argmax(gain))
            if gain[q] > _EPS:
                state.place(i, q)
                improved = True
        if improved:
            continue
        # no single move helps: look for the first node with an improving swap
        scores = state.all_scores()
        assign = state.assign
        own = scores[np.arange(state.n), assign]
        for i in order:
            p = assign[i]
            row = pair.getrow(i).toarray().ravel()
            gain_i = scores[i] - scores[i, p]
            total = gain_i[assign] + (scores[:, p] - own) + row
            total[assign == p] = -np.inf
            j = int(np.argmax(total))
            if total[j] > _EPS:
                q = assign[j]
                state.place(i, q)
                state.place(j, p)
                improved = True
                break
        if not improved:
            return


def _solve(graph: AccessGraph, k: int, cap: int, seed: int, directed: bool, max_rounds: int):
    index, co, dep = graph.matrices()
    n = len(graph.nodes)
    rng = np.random.default_rng(seed)
    state = _PartitionState(co, dep, k, directed)
    degree = np.asarray(co.sum(axis=1)).ravel()
    tiebreak = rng.permutation(n)
    order = np.lexsort((tiebreak, -degree))
    for i in order:
        s = state.scores(i)
        s = np.where(state.sizes >= cap, -np.inf, s)
        best = s.max()
        cands = np.flatnonzero(s >= best - _EPS)
        q = int(cands[np.argmin(state.sizes[cands])])
        state.place(i, q)
    _local_search(state, cap, order, max_rounds)
    greedy = state.assign.copy()

    rand = random_balanced_partition(graph.nodes, k, seed)
    rand_assign = np.array([rand[v] for v in graph.nodes], dtype=int)
    if _objective(co, dep, rand_assign, directed) > _objective(co, dep, greedy, directed) + _EPS:
        # the random start is better: polish it too and keep the winner
        state = _PartitionState(co, dep, k, directed)
        for i in range(n):
            state.place(i, int(rand_assign[i]))
        _local_search(state, cap, order, max_rounds)
        if _objective(co, dep, state.assign, directed) > _objective(co, dep, greedy, directed):
            greedy = state.assign.copy()
    return greedy


def partition_maxcut(
    graph: AccessGraph,
    num_partitions: int,
    max_partition_size: int,
    seed: int = 0,
    *,
    directed: bool = False,
    max_rounds: int = 200,
) -> dict[str, int]:
    """Size-constrained max-k-cut by greedy placement plus local search.

    Nodes are placed in order of decreasing weighted degree into the
    partition that cuts the most weight to already placed neighbours, then
    single-node moves and pairwise swaps are applied until nothing improves
    (or ``max_rounds`` passes). The result never cuts less weight than a
    random balanced partition drawn from the same seed.

    With ``directed=True`` partition indices are read as stage order and a
    dependency pair only counts when its source sits in a lower partition;
    on graphs without dependencies this is the same objective.
    """
    n = len(graph.nodes)
    if num_partitions < 1:
        raise Infeasible("need at least one partition")
    if n > num_partitions * max_partition_size:
        raise Infeasible(
            f"{n} tuples do not fit {num_partitions} partitions of {max_partition_size}"
        )
    if n == 0:
        return {}
    assign = _solve(graph, num_partitions, max_partition_size, seed, directed, max_rounds)
    return {v: int(assign[i]) for i, v in enumerate(graph.nodes)}


# -- orientation ---------------------------------------------------------------------


@dataclass
class Orientation:
    order: list[int]
    removed: set[tuple[str, str]]
    removed_partition_edges: set[tuple[int, int]]


def orient_partitions(graph: AccessGraph, partition_of: Mapping[str, int]) -> Orientation:
    """Order partitions so that retained dependency edges point to later stages.

    Between two partitions whose dependencies point both ways, the direction
    with the lower total weight is dropped. Cycles that remain over three or
    more partitions are broken by dropping their lightest aggregate edge.
    """
    agg: Counter[tuple[int, int]] = Counter()
    for (u, v), w in graph.forward.items():
        a, b = partition_of[u], partition_of[v]
        if a != b:
            agg[(a, b)] += w
    removed_parts: set[tuple[int, int]] = set()
    for (a, b), w in list(agg.items()):
        if a < b and (b, a) in agg:
            back = agg[(b, a)]
            if w < back:
                removed_parts.add((a, b))
            else:
                removed_parts.add((b, a))
    dag = nx.DiGraph()
    parts = sorted(set(partition_of.values()))
    dag.add_nodes_from(parts)
    for e, w in agg.items():
        if e not in removed_parts:
            dag.add_edge(*e, weight=w)
    while True:
        try:
            cycle = nx.find_cycle(dag)
        except nx.NetworkXNoCycle:
            break
        lightest = min(((u, v) for u, v in cycle), key=lambda e: (dag.edges[e]["weight"], e))
        dag.remove_edge(*lightest)
        removed_parts.add(lightest)
    order = list(nx.lexicographical_topological_sort(dag))
    removed = {
        (u, v) for (u, v) in graph.forward if (partition_of[u], partition_of[v]) in removed_parts
    }
    return Orientation(order, removed, removed_parts)


# -- layout --------------------------------------------------------------------------


@dataclass
class LayoutPlan:
    placement: dict[str, tuple[int, int, int]]
    partition_of: dict[str, int] = field(default_factory=dict)
    stage_of_partition: dict[int, int] = field(default_factory=dict)

    def stage(self, key: str) -> int:
        try:
            return self.placement[key][0]
        except KeyError:
            raise UnknownKey(key) from None

    def __contains__(self, key) -> bool:
        return key in self.placement

    def __len__(self):
        return len(self.placement)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "stage", "array", "slot"])
        for key in sorted(self.placement, key=key_order):
            w.writerow([key, *self.placement[key]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LayoutPlan":
        rows = csv.DictReader(io.StringIO(text))
        placement = {r["key"]: (int(r["stage"]), int(r["array"]), int(r["slot"])) for r in rows}
        return cls(placement)


def compile_layout(order: Sequence[int], partitions: Mapping[int, Sequence[str]], config) -> LayoutPlan:
    """Map ordered partitions to (stage, array) register arrays.

    With no more partitions than stages each partition gets its own stage in
    array 0. Otherwise consecutive partitions share a stage on distinct arrays.
    """
    count = len(order)
    if count > config.num_stages * config.arrays_per_stage:
        raise CapacityExceeded(
            f"{count} partitions exceed {config.num_stages}x{config.arrays_per_stage} register arrays"
        )
    per_stage = 1 if count <= config.num_stages else math.ceil(count / config.num_stages)
    placement = {}
    partition_of = {}
    stage_of = {}
    for pos, pid in enumerate(order):
        keys = sorted(partitions.get(pid, ()), key=key_order)
        if len(keys) > config.slots_per_array:
            raise CapacityExceeded(
                f"partition {pid} holds {len(keys)} tuples, arrays have {config.slots_per_array} slots"
            )
        stage, array = divmod(pos, per_stage)
        stage_of[pid] = stage
        for slot, key in enumerate(keys):
            placement[key] = (stage, array, slot)
            partition_of[key] = pid
    return LayoutPlan(placement, partition_of, stage_of)


def random_layout(keys: Iterable[str], config, seed: int) -> LayoutPlan:
    """Place every key in a uniformly random register array with room left."""
    rng = np.random.default_rng(seed)
    keys = sorted(set(keys), key=key_order)
    if len(keys) > config.capacity:
        raise CapacityExceeded(f"{len(keys)} keys exceed switch capacity {config.capacity}")
    arrays = [(s, a) for s in range(config.num_stages) for a in range(config.arrays_per_stage)]
    used = Counter()
    placement = {}
    for key in keys:
        open_arrays = [x for x in arrays if used[x] < config.slots_per_array]
        stage, array = open_arrays[int(rng.integers(len(open_arrays)))]
        placement[key] = (stage, array, used[(stage, array)])
        used[(stage, array)] += 1
    return LayoutPlan(placement)


def plan_layout(
    trace: Sequence[Txn],
    hot: Sequence[str],
    config,
    seed: int = 0,
    *,
    directed: bool = True,
    num_partitions: int | None = None,
) -> LayoutPlan:
    """Full offline step: access graph, max-cut, orientation, stage mapping."""
    hot = list(hot)
    if not hot:
        return LayoutPlan({})
    if len(hot) > config.capacity:
        raise CapacityExceeded(f"{len(hot)} hot tuples exceed switch capacity {config.capacity}")
    graph = build_access_graph(trace, hot)
    if num_partitions is None:
        num_partitions = max(config.num_stages, math.ceil(len(hot) / config.slots_per_array))
    partition_of = partition_maxcut(
        graph, num_partitions, config.slots_per_array, seed, directed=directed
    )
    orientation = orient_partitions(graph, partition_of)
    order = [p for p in orientation.order if p in set(partition_of.values())]
    partition_of = refine_stage_order(graph, partition_of, order, config.slots_per_array)
    members: dict[int, list[str]] = defaultdict(list)
    for key, pid in partition_of.items():
        members[pid].append(key)
    order = [p for p in order if members.get(p)]
    return compile_layout(order, members, config)


def refine_stage_order(
    graph: AccessGraph,
    partition_of: Mapping[str, int],
    order: Sequence[int],
    cap: int,
    max_rounds: int = 50,
) -> dict[str, int]:
    """Single-key moves between ordered partitions that lower the multi-pass weight.

    With the partition order fixed, a co-accessed pair costs its weight when
    both keys share a partition (same stage), and a dependency pair costs its
    weight when the source does not sit strictly before the target. Orientation
    drops whole partition-to-partition directions, so a few dependencies can
    end up backwards; moving one endpoint usually fixes them. Only strictly
    improving moves are taken, so this never undoes the max-cut gains.
    """
    part = dict(partition_of)
    pos = {p: i for i, p in enumerate(order)}
    nbr: dict[str, dict[str, int]] = defaultdict(dict)
    for (u, v), w in graph.weight.items():
        nbr[u][v] = w
        nbr[v][u] = w
    succ: dict[str, dict[str, int]] = defaultdict(dict)
    pred: dict[str, dict[str, int]] = defaultdict(dict)
    for (u, v), w in graph.forward.items():
        succ[u][v] = w
        pred[v][u] = w
    size = Counter(part.values())

    def cost(key: str, p: int) -> int:
        i = pos[p]
        c = sum(w for v, w in nbr[key].items() if part[v] == p)
        c += sum(w for v, w in succ[key].items() if pos[part[v]] <= i)
        c += sum(w for u, w in pred[key].items() if pos[part[u]] >= i)
        return c

    for _ in range(max_rounds):
        suspects = {k for (u, v) in graph.forward for k in (u, v) if pos[part[u]] >= pos[part[v]]}
        suspects |= {k for (u, v) in graph.weight for k in (u, v) if part[u] == part[v]}
        moved = False
        for key in sorted(suspects, key=key_order):
            cur = part[key]
            base = cost(key, cur)
            if base == 0:
                continue
            options = [(cost(key, p), pos[p], p) for p in order if p != cur and size[p] < cap]
            if not options:
                continue
            best, _, target = min(options)
            if best < base:
                part[key] = target
                size[cur] -= 1
                size[target] += 1
                moved = True
        if not moved:
            moved = _pair_move(graph, part, order, pos, size, cap, cost)
        if not moved:
            break
    return part


def _pair_move(graph, part, order, pos, size, cap, cost) -> bool:
    """Move both ends of one backwards dependency at once, when that strictly helps."""
    bad = sorted((e for e in graph.forward if pos[part[e[0]]] >= pos[part[e[1]]]),
                 key=lambda e: (key_order(e[0]), key_order(e[1])))
    for u, v in bad:
        pu, pv = part[u], part[v]

        def shared(p, q):
            # the u-v terms appear in both cost(u) and cost(v)
            c = graph.weight.get(_pair(u, v), 0) * (p == q)
            c += graph.forward.get((u, v), 0) * (pos[p] >= pos[q])
            c += graph.forward.get((v, u), 0) * (pos[q] >= pos[p])
            return c

        base = cost(u, pu) + cost(v, pv) - shared(pu, pv)
        best = None
        for p in order:
            for q in order:
                if pos[p] >= pos[q] or (p, q) == (pu, pv):
                    continue
                room = Counter(size)
                room[pu] -= 1
                room[pv] -= 1
                room[p] += 1
                room[q] += 1
                if room[p] > cap or room[q] > cap:
                    continue
                part[u], part[v] = p, q
                after = cost(u, p) + cost(v, q) - shared(p, q)
                part[u], part[v] = pu, pv
                if after < base and (best is None or after < best[0]):
                    best = (after, p, q)
        if best is not None:
            _, p, q = best
            part[u], part[v] = p, q
            size[pu] -= 1
            size[pv] -= 1
            size[p] += 1
            size[q] += 1
            return True
    return False


# -- pass classification -------------------------------------------------------------


class PassKind(enum.Enum):
    SINGLE_PASS = "single-pass"
    MULTI_PASS = "multi-pass"
    NOT_OFFLOADABLE = "not-offloadable"


@dataclass
class PassClassification:
    kind: PassKind
    batches: list[list[int]]
    """Per pass, indices into the classified op sequence."""

    @property
    def pass_count(self) -> int:
        return len(self.batches)


MAX_BATCH = 255


def pass_order(ops: Sequence[Op], plan: LayoutPlan) -> list[int]:
    """Execution order of ``ops``: sorted by stage when dependencies allow it."""
    stages = [plan.stage(op.key) for op in ops]
    idx = sorted(range(len(ops)), key=lambda i: stages[i])
    pos = {i: n for n, i in enumerate(idx)}
    for i, op in enumerate(ops):
        for d in op.deps:
            for j in range(i):
                if ops[j].key == d and pos[j] > pos[i]:
                    return list(range(len(ops)))
    return idx


def classify_transaction(ops: Sequence[Op], plan: LayoutPlan, *, reorder: bool = False) -> PassClassification:
    """Greedily pack ops into pipeline passes, in the given order.

    A new pass starts whenever the next op's stage is not after the previous
    op's stage in the current pass. With ``reorder=True`` the ops are first
    stably sorted by stage, unless that would move an op ahead of one it
    depends on; batches then still index the original sequence.
    """
    for op in ops:
        if op.key not in plan.placement:
            raise UnknownKey(op.key)
    order = pass_order(ops, plan) if reorder else list(range(len(ops)))
    batches: list[list[int]] = []
    last_stage = None
    for i in order:
        stage, array, _ = plan.placement[ops[i].key]
        if batches and last_stage is not None and stage > last_stage and len(batches[-1]) < MAX_BATCH:
            batches[-1].append(i)
        else:
            batches.append([i])
        last_stage = stage
    if not batches:
        return PassClassification(PassKind.SINGLE_PASS, [[]])
    if len(batches) > MAX_BATCH:
        return PassClassification(PassKind.NOT_OFFLOADABLE, batches)
    kind = PassKind.SINGLE_PASS if len(batches) == 1 else PassKind.MULTI_PASS
    return PassClassification(kind, batches)


def to_instructions(ops: Sequence[Op], plan: LayoutPlan, classification: PassClassification):
    """Switch instructions for each pass of a classified op sequence."""
    out = []
    for batch in classification.batches:
        instrs = []
        for i in batch:
            op = ops[i]
            stage, array, slot = plan.placement[op.key]
            instrs.append(SwitchInstruction(stage, array, slot, op.opcode, op.operand, op.predicate))
        out.append(instrs)
    return out

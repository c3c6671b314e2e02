"""Reference implementations used only by the tests.

They are written independently of the package code on purpose: plain
dictionaries, direct loops and exhaustive enumeration.
"""

import itertools

INT64 = 1 << 64


def wrap(v):
    v %= INT64
    return v - INT64 if v >= 1 << 63 else v


def apply(opcode, operand, predicate, value, acc, flag):
    """Instruction semantics keyed by opcode *name*; returns (value, result, acc, flag)."""
    if opcode == "READ":
        return value, value, wrap(acc + value), flag
    if opcode == "WRITE":
        return wrap(operand), value, wrap(acc + value), flag
    if opcode == "ADD_READ":
        return wrap(value + operand), value, acc, flag
    if opcode == "CONSTRAINED_WRITE":
        if predicate == "RESULT_NON_NEGATIVE":
            ok = value + operand >= 0
            return (wrap(value + operand) if ok else value), value, acc, ok
        ok = operand >= value
        return (operand if ok else value), value, acc, ok
    if opcode == "SUB_IF_GEQ":
        if value >= operand:
            return wrap(value - operand), value, acc, True
        return value, value, acc, False
    if opcode == "ADD_IF_FLAG":
        return (wrap(value + operand) if flag else value), value, acc, flag
    if opcode == "ADD_ACC":
        return wrap(value + acc), value, acc, flag
    return value, 0, acc, flag


def replay_packets(packets, initial, slot_key):
    """Run packets one after another against a dict; returns (state, results per packet).

    ``slot_key`` maps (stage, array, slot) to a dict key.
    """
    state = dict(initial)
    out = []
    for p in packets:
        acc, flag = p.acc_in, p.flag_in
        res = []
        for batch in p.pass_plan:
            for i in batch:
                k = slot_key[(i.stage, i.array, i.slot)]
                state[k], r, acc, flag = apply(i.opcode.name, i.operand, i.predicate.name, state.get(k, 0), acc, flag)
                res.append(r)
        out.append(res)
    return state, out


def two_bit_grant(state, request):
    """2-bit lock: grant iff neither half would reach 2."""
    return state[0] + request[0] != 2 and state[1] + request[1] != 2


def brute_force_maxcut(nodes, weight, k, cap):
    """Best undirected cut weight over all assignments respecting the size cap."""
    best = 0
    n = len(nodes)
    for assign in itertools.product(range(k), repeat=n):
        if max(assign.count(p) for p in range(k)) > cap:
            continue
        part = dict(zip(nodes, assign))
        cut = sum(w for (u, v), w in weight.items() if part[u] != part[v])
        best = max(best, cut)
    return best


def count_pairs(txns, hot=None):
    """Co-access counts of unordered key pairs, one per transaction."""
    counts = {}
    for t in txns:
        keys = sorted({o.key for o in t.ops if hot is None or o.key in hot})
        for a, b in itertools.combinations(keys, 2):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    return counts


def needs_multipass(stages):
    """True iff a stage sequence is not strictly increasing."""
    return any(b <= a for a, b in zip(stages, stages[1:]))


def conflict_cycle(history):
    """Detect a cycle in a conflict graph by DFS.

    ``history`` maps txn -> list of (key, order, is_write); order values are
    comparable per key.
    """
    by_key = {}
    for t, accesses in history.items():
        for key, order, w in accesses:
            by_key.setdefault(key, []).append((order, t, w))
    edges = {t: set() for t in history}
    for accesses in by_key.values():
        accesses.sort()
        for i, (o1, t1, w1) in enumerate(accesses):
            for o2, t2, w2 in accesses[i + 1:]:
                if t1 != t2 and (w1 or w2):
                    edges[t1].add(t2)
    color = {}

    def visit(u):
        color[u] = 1
        for v in edges[u]:
            c = color.get(v, 0)
            if c == 1 or (c == 0 and visit(v)):
                return True
        color[u] = 2
        return False

    return any(color.get(t, 0) == 0 and visit(t) for t in history)


def brute_force_maxcut_np(n, edges, k, cap):
    """Vectorized exhaustive max-k-cut for up to about 10 nodes.

    ``edges`` is a list of (i, j, w) over node indices 0..n-1.
    """
    import numpy as np

    assign = np.indices((k,) * n).reshape(n, -1).T
    ok = np.ones(len(assign), dtype=bool)
    for p in range(k):
        ok &= (assign == p).sum(axis=1) <= cap
    assign = assign[ok]
    cut = np.zeros(len(assign))
    for i, j, w in edges:
        cut += w * (assign[:, i] != assign[:, j])
    return float(cut.max())


def serial_balance(ops_by_txn, initial):
    """Apply SmallBank-style op lists one transaction after another with plain dicts."""
    state = dict(initial)
    for ops in ops_by_txn:
        acc, flag = 0, False
        for key, opcode, operand, predicate in ops:
            state[key], _, acc, flag = apply(opcode, operand, predicate, state.get(key, 0), acc, flag)
    return state

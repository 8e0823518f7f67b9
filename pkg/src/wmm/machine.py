"""Operational abstract machine: per-location buffers, a read queue and a log.

Every event e is split into a delayed label d(e) (entering the buffer or the
queue) and a flushed label f(e) (leaving it).  A path is a partial order over
labels; `mns` ("machine not stuck") asks whether some linearisation runs from
the initial state without reaching the bottom state.
"""

import json
from dataclasses import dataclass
from typing import FrozenSet, Optional, Tuple

from .axiomatic import (
    MAX_EVENTS, TooManyEvents, delays, fr_of, get_model, safe_edges, valid,
)

BOTTOM = None


@dataclass(frozen=True)
class Label:
    tag: str                     # "d" or "f"
    event: int
    source: Optional[int] = None  # rf source for reads

    def __str__(self):
        return f"{self.tag}({self.event})"


@dataclass(frozen=True)
class MachineState:
    """mem: (loc, write) pairs; pending: buffered writes and queued reads in
    entry order; log: ((proc, loc), write) pairs."""

    mem: Tuple
    pending: Tuple[int, ...]
    log: Tuple

    def mem_map(self):
        return dict(self.mem)

    def log_map(self):
        return dict(self.log)

    def buff(self, E, loc):
        return [e for e in self.pending if E[e].dir == "W" and E[e].loc == loc]

    def queue(self, E):
        return [e for e in self.pending if E[e].dir == "R"]

    def snapshot(self, E):
        locs = {E[w].loc for _, w in self.mem}
        return {
            "mem": {str(l): E[w].name for l, w in self.mem},
            "buff": {str(l): [E[w].name for w in self.buff(E, l)] for l in locs if self.buff(E, l)},
            "queue": [E[r].name for r in self.queue(E)],
            "log": {f"{p}:{l}": E[w].name for (p, l), w in self.log},
        }


@dataclass(frozen=True)
class PathConstraints:
    labels: Tuple[Label, ...]
    before: FrozenSet[Tuple[Label, Label]]
    delayed: FrozenSet[Tuple[int, int]]


def initial_state(E):
    mem = tuple((e.loc, e.id) for e in E.events if e.is_init)
    procs = sorted({e.proc for e in E.events if not e.is_init})
    log = tuple(((p, loc), w) for p in procs for loc, w in mem)
    return MachineState(mem, (), log)


def _replace_pair(pairs, key, value):
    return tuple((k, value if k == key else v) for k, v in pairs)


def step(s, label, E):
    """Apply one label; returns the new state or BOTTOM."""
    if s is BOTTOM:
        return BOTTOM
    e = E[label.event]
    if label.tag == "d":
        return MachineState(s.mem, s.pending + (e.id,), s.log)
    if e.id not in s.pending:
        return BOTTOM
    pos = s.pending.index(e.id)
    if e.dir == "W":
        # oldest buffered write to the location
        if any(E[p].dir == "W" and E[p].loc == e.loc for p in s.pending[:pos]):
            return BOTTOM
        # no read of this location by the same thread enqueued before it
        if any(E[p].dir == "R" and E[p].loc == e.loc and E[p].proc == e.proc
               for p in s.pending[:pos]):
            return BOTTOM
        pending = s.pending[:pos] + s.pending[pos + 1:]
        return MachineState(_replace_pair(s.mem, e.loc, e.id), pending, s.log)
    w = label.source
    dp = E.dp
    for p in s.pending:
        if E[p].dir == "R" and p != e.id and ((p, e.id) in dp or (p, w) in dp):
            return BOTTOM
    visible = [s.mem_map()[e.loc]] + s.buff(E, e.loc)
    if w not in visible:
        return BOTTOM
    wpos = visible.index(w)
    for i, w2 in enumerate(visible):
        if i == 0 or E[w2].proc != e.proc:
            continue
        entered_after = s.pending.index(w2) > pos
        placed_before = i < wpos
        if entered_after and placed_before:
            return BOTTOM
        if not entered_after and i > wpos:
            return BOTTOM
    seen = s.log_map()[(e.proc, e.loc)]
    if seen in visible and visible.index(seen) > wpos:
        return BOTTOM
    pending = s.pending[:pos] + s.pending[pos + 1:]
    return MachineState(s.mem, pending, _replace_pair(s.log, (e.proc, e.loc), w))


EXIT_MODES = ("converse", "free")


def build_path(E, X, D, exit_mode="free", A=None):
    """Enter in po, safe exit for pairs outside D, delayed exit for D.

    With a model `A`, the pairs its fences make safe by cumulativity
    (rfe;fence and fence;rfe) also get a safe exit.

    By default a delayed pair is left unordered at exit, so the converse
    order is allowed but not forced; exit_mode="converse" forces it (that
    reading makes the path cyclic when a whole cycle is delayed, e.g. lb on
    Power)."""
    if exit_mode not in EXIT_MODES:
        raise ValueError(f"unknown exit mode {exit_mode!r}")
    rf = X.rf_map()
    evs = E.program_events
    d = {e.id: Label("d", e.id, rf.get(e.id)) for e in evs}
    f = {e.id: Label("f", e.id, rf.get(e.id)) for e in evs}
    D = frozenset(D)
    before = set()
    for e in evs:
        before.add((d[e.id], f[e.id]))
    for a, b in E.po:
        before.add((d[a], d[b]))
    relations = set(E.po) | X.rf_pairs() | fr_of(X) | X.ws_pairs()
    if A is not None:
        relations |= safe_edges(E, X, get_model(A))
    for a, b in relations:
        if a not in d or b not in d:
            continue  # initial writes have no labels
        if (a, b) in D:
            if exit_mode == "converse":
                before.add((f[b], f[a]))
        else:
            before.add((f[a], f[b]))
    labels = tuple(d[e.id] for e in evs) + tuple(f[e.id] for e in evs)
    return PathConstraints(labels, frozenset(before), D)


def _search(E, pc):
    preds = {l: set() for l in pc.labels}
    for a, b in pc.before:
        preds[b].add(a)
    memo = set()
    trail = []

    def go(done, s):
        if len(done) == len(pc.labels):
            return True
        key = (done, s)
        if key in memo:
            return False
        memo.add(key)
        for l in pc.labels:
            if l in done or not preds[l] <= done:
                continue
            nxt = step(s, l, E)
            if nxt is BOTTOM:
                continue
            trail.append((l, nxt))
            if go(done | {l}, nxt):
                return True
            trail.pop()
        return False

    ok = go(frozenset(), initial_state(E))
    return ok, list(trail)


def mns(E, pc):
    """True iff some linearisation of the path never reaches BOTTOM."""
    if len(E.program_events) > MAX_EVENTS:
        raise TooManyEvents(f"{len(E.program_events)} events exceeds {MAX_EVENTS}")
    return _search(E, pc)[0]


def accepting_run(E, pc):
    """Labels and state snapshots of an accepting linearisation, or None."""
    ok, trail = _search(E, pc)
    if not ok:
        return None
    return [{"label": f"{l.tag}({E[l.event].name})", "state": s.snapshot(E)} for l, s in trail]


def lemma1(E, X):
    """valid_SC(E,X) <=> mns(E, path(E,X,∅))."""
    return valid(E, X, "SC") == mns(E, build_path(E, X, ()))


def _sides(E, X, A, D, exit_mode="free"):
    lhs = valid(E, X, A) and not valid(E, X, "SC")
    rhs = mns(E, build_path(E, X, D, exit_mode, A))
    return lhs, rhs


def check_theorem1(E, X, A, exit_mode="free"):
    """Biconditional of the delay theorem for a non-SC execution.

    On SC-valid executions the left side is false by construction, so the
    check reduces to Lemma 1 (see `theorem_sides` for the raw values)."""
    A = get_model(A)
    if valid(E, X, "SC"):
        return lemma1(E, X)
    lhs, rhs = _sides(E, X, A, delays(E, X, A), exit_mode)
    return lhs == rhs


def check_theorem2(E, X, A, selection, exit_mode="free"):
    """Same biconditional with D a selection hitting every critical cycle."""
    from .cycles import concrete_critical_cycles

    A = get_model(A)
    selection = frozenset(selection)
    dl = delays(E, X, A)
    if not selection <= dl:
        raise ValueError("selection must be a subset of the delay pairs")
    for _, pairs in concrete_critical_cycles(E, X, A):
        if not pairs & selection:
            raise ValueError("selection misses a critical cycle")
    if valid(E, X, "SC"):
        return lemma1(E, X)
    lhs, rhs = _sides(E, X, A, selection, exit_mode)
    return lhs == rhs


def theorem_sides(E, X, A, D=None, exit_mode="free"):
    """(valid_A ∧ ¬valid_SC, mns(path(D))) with D defaulting to the delays."""
    A = get_model(A)
    return _sides(E, X, A, delays(E, X, A) if D is None else D, exit_mode)


def minimal_selection(E, X, A):
    """A greedy selection of delay pairs hitting every critical cycle."""
    from .cycles import concrete_critical_cycles

    cycles = [pairs for _, pairs in concrete_critical_cycles(E, X, A)]
    chosen = set()
    while True:
        open_ = [c for c in cycles if not c & chosen]
        if not open_:
            return frozenset(chosen)
        counts = {}
        for c in open_:
            for p in c:
                counts[p] = counts.get(p, 0) + 1
        chosen.add(min(counts, key=lambda p: (-counts[p], p)))


def failure_dump(E, X, A, D, exit_mode="free"):
    """JSON-ready record of a theorem check: the path and, if the machine
    accepts, one accepting run."""
    pc = build_path(E, X, D, exit_mode, A)
    return {
        "model": get_model(A).name,
        "delayed": sorted([E[a].name, E[b].name] for a, b in D),
        "constraints": sorted([f"{a.tag}({E[a.event].name})", f"{b.tag}({E[b.event].name})"]
                              for a, b in pc.before),
        "run": accepting_run(E, pc),
    }


def dump_json(obj):
    return json.dumps(obj, indent=2)

"""Axiomatic weak memory framework.

An execution is a set of events with program order and dependencies (the
event structure) plus a witness: a write serialisation per location and a
read-from map.  Validity on an architecture is the conjunction of three
acyclicity checks (uniproc, thin, consensus).  `enumerate_witnesses` gives the
brute-force ground truth used to cross-check the machine and the explorer.
"""

from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Dict, FrozenSet, Optional, Tuple

from .frontend.ast import (
    Assign, BinOp, Fence, Int, Load, LwFence, Not, Nondet, Ref, Reg, Store,
)

FENCE_RANK = {None: 0, "lw": 1, "full": 2}

MAX_EVENTS = 12


class TooManyEvents(ValueError):
    pass


class UnsupportedProgram(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    id: int
    dir: str                     # "R" or "W"
    loc: Ref
    value: Optional[int] = None
    proc: Optional[int] = None   # None for initial writes
    po_index: Optional[int] = None
    origin: object = "init"      # AST path of the access, or "init"

    @property
    def is_init(self):
        return self.proc is None

    @property
    def name(self):
        if self.is_init:
            return f"i{self.loc}"
        return chr(ord("a") + self.id) if self.id < 26 else f"e{self.id}"

    def __str__(self):
        v = "" if self.value is None else self.value
        return f"({self.name}) {self.dir}{self.loc}{v}"


@dataclass
class EventStructure:
    events: Tuple[Event, ...]
    po: FrozenSet[Tuple[int, int]]
    dp: FrozenSet[Tuple[int, int]] = frozenset()
    fences: Dict[Tuple[int, int], Optional[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {e.id: e for e in self.events}

    def __getitem__(self, eid):
        return self.by_id[eid]

    @property
    def program_events(self):
        return [e for e in self.events if not e.is_init]

    def reads(self):
        return [e for e in self.events if e.dir == "R"]

    def writes(self, loc=None):
        return [e for e in self.events if e.dir == "W" and (loc is None or e.loc == loc)]

    def init_write(self, loc):
        for e in self.events:
            if e.is_init and e.loc == loc:
                return e
        raise KeyError(loc)

    def locations(self):
        seen = []
        for e in self.events:
            if e.loc not in seen:
                seen.append(e.loc)
        return seen

    def fence_between(self, a, b):
        return self.fences.get((a, b))


@dataclass(frozen=True)
class ExecutionWitness:
    ws: Tuple[Tuple[Ref, Tuple[int, ...]], ...]   # per location, init write first
    rf: Tuple[Tuple[int, int], ...]               # (read, write) sorted by read

    def ws_order(self):
        return dict(self.ws)

    def rf_map(self):
        return dict(self.rf)

    def ws_pairs(self):
        out = set()
        for _, order in self.ws:
            for i, a in enumerate(order):
                for b in order[i + 1:]:
                    out.add((a, b))
        return out

    def rf_pairs(self):
        return {(w, r) for r, w in self.rf}


# -- relation helpers -----------------------------------------------------------

def acyclic(pairs):
    """True iff the directed graph given by `pairs` has no cycle."""
    succ = {}
    for a, b in pairs:
        if a == b:
            return False
        succ.setdefault(a, []).append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {}
    for root in succ:
        if colour.get(root, WHITE) != WHITE:
            continue
        stack = [(root, iter(succ.get(root, ())))]
        colour[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
                continue
            c = colour.get(nxt, WHITE)
            if c == GREY:
                return False
            if c == WHITE:
                colour[nxt] = GREY
                stack.append((nxt, iter(succ.get(nxt, ()))))
    return True


def derive_fr(ws, rf, E=None):
    """from-read: r precedes every write ws-after the write r reads from.

    `ws` is a witness, a {loc: order} map or a set of (w, w') pairs; `rf` a
    {read: write} map or a set of (write, read) pairs."""
    if isinstance(ws, ExecutionWitness):
        pairs = ws.ws_pairs()
    elif isinstance(ws, dict):
        pairs = {(a, b) for seq in ws.values() for i, a in enumerate(seq) for b in seq[i + 1:]}
    else:
        pairs = set(ws)
    rfm = rf if isinstance(rf, dict) else {r: w for w, r in rf}
    return {(r, b) for r, w in rfm.items() for a, b in pairs if a == w}


def fr_of(X):
    return derive_fr(X.ws_order(), X.rf_map())


def _po_loc(E):
    return {(a, b) for a, b in E.po if E[a].loc == E[b].loc}


def _split_rf(E, X):
    rfi, rfe = set(), set()
    for w, r in X.rf_pairs():
        we, re_ = E[w], E[r]
        (rfi if we.proc is not None and we.proc == re_.proc else rfe).add((w, r))
    return rfi, rfe


# -- architectures --------------------------------------------------------------

@dataclass(frozen=True)
class ArchModel:
    """Safety predicate of an architecture.

    `relaxed` lists the program-order kinds (different locations, no
    dependency, no fence) that the architecture may reorder.
    """

    name: str
    relaxed: FrozenSet[str] = frozenset()
    rfi_safe: bool = True
    rfe_safe: bool = True
    # fence kind -> (A-cumulative, B-cumulative)
    cumulativity: Tuple[Tuple[str, Tuple[bool, bool]], ...] = (
        ("full", (True, True)), ("lw", (True, True)))
    # any-thread reads from buffered writes (non-atomic stores)
    shares_buffers: bool = False

    def fence_orders(self, kind, fence):
        if fence == "full":
            return True
        if fence == "lw":
            return kind != "WR"
        return False

    def safe_po(self, kind, has_dp=False, same_loc=False, fence=None):
        if same_loc or has_dp or self.fence_orders(kind, fence):
            return True
        return kind not in self.relaxed

    def cumulative(self, fence):
        return dict(self.cumulativity).get(fence, (False, False))

    def __str__(self):
        return self.name


SC = ArchModel("SC")
TSO = ArchModel("TSO", frozenset({"WR"}), rfi_safe=False)
PSO = ArchModel("PSO", frozenset({"WR", "WW"}), rfi_safe=False)
RMO = ArchModel("RMO", frozenset({"WR", "WW", "RR", "RW"}), rfi_safe=False)
POWER = ArchModel("POWER", frozenset({"WR", "WW", "RR", "RW"}), rfi_safe=False,
                  rfe_safe=False, shares_buffers=True)

MODELS = {m.name: m for m in (SC, TSO, PSO, RMO, POWER)}
# strongest first
MODEL_CHAIN = (SC, TSO, PSO, RMO, POWER)


def get_model(name):
    if isinstance(name, ArchModel):
        return name
    try:
        return MODELS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODELS)}") from None


def po_kind(E, a, b):
    return E[a].dir + E[b].dir


def safe_po_pair(E, a, b, A):
    return A.safe_po(po_kind(E, a, b), (a, b) in E.dp, E[a].loc == E[b].loc, E.fence_between(a, b))


def safe_edges(E, X, A):
    """(ws ∪ rf ∪ fr ∪ po) ∩ safe_A, plus the edges fences make safe by cumulativity."""
    rfi, rfe = _split_rf(E, X)
    edges = set(X.ws_pairs()) | fr_of(X)
    if A.rfi_safe:
        edges |= rfi
    if A.rfe_safe:
        edges |= rfe
    edges |= {(a, b) for a, b in E.po if safe_po_pair(E, a, b, A)}
    if not A.rfe_safe:
        for w, r in rfe:
            for a, b in E.po:
                f = E.fence_between(a, b)
                if f is None:
                    continue
                a_cum, b_cum = A.cumulative(f)
                kind = po_kind(E, a, b)
                # rfe;fence
                if a_cum and a == r and A.fence_orders(kind, f):
                    edges.add((w, b))
                # fence;rfe
                if b_cum and b == w and A.fence_orders(kind, f):
                    edges.add((a, r))
    return edges


def check_uniproc(E, X):
    return acyclic(X.ws_pairs() | X.rf_pairs() | fr_of(X) | _po_loc(E))


def check_thin(E, X):
    return acyclic(X.rf_pairs() | set(E.dp))


def check_consensus(E, X, A):
    return acyclic(safe_edges(E, X, A))


def valid(E, X, A):
    A = get_model(A)
    return check_uniproc(E, X) and check_thin(E, X) and check_consensus(E, X, A)


def delays(E, X, A):
    """po or external read-from pairs that are not safe on A."""
    A = get_model(A)
    out = {(a, b) for a, b in E.po if not safe_po_pair(E, a, b, A)}
    if not A.rfe_safe:
        # initial writes precede everything, so reading them is never a delay
        _, rfe = _split_rf(E, X)
        out |= {(w, r) for w, r in rfe if not E[w].is_init}
    return out


def enumerate_witnesses(E, max_events=MAX_EVENTS):
    """Every (ws, rf): all write orders per location times all rf choices."""
    n = len(E.program_events)
    if n > max_events:
        raise TooManyEvents(f"{n} events exceeds the enumeration guard of {max_events}")
    locs = E.locations()
    ws_choices = []
    for loc in locs:
        init = E.init_write(loc).id
        others = [w.id for w in E.writes(loc) if not w.is_init]
        ws_choices.append([(loc, (init,) + p) for p in permutations(others)])
    reads = sorted(r.id for r in E.reads())
    rf_choices = [[w.id for w in E.writes(E[r].loc)] for r in reads]
    for ws in product(*ws_choices):
        for srcs in product(*rf_choices):
            yield ExecutionWitness(tuple(ws), tuple(zip(reads, srcs)))


# -- programs to event structures -------------------------------------------------

def _subst(e, env):
    """Replace registers with their symbolic values."""
    if isinstance(e, Reg):
        return env.get(e.name, Int(0))
    if isinstance(e, Not):
        return Not(_subst(e.operand, env))
    if isinstance(e, BinOp):
        return BinOp(e.op, _subst(e.left, env), _subst(e.right, env))
    if isinstance(e, Nondet):
        raise UnsupportedProgram("nondeterministic choice in an oracle program")
    return e


@dataclass(frozen=True)
class ReadVal:
    """Symbolic leaf: the value returned by read event `event`."""

    event: int


def eval_sym(e, read_value):
    """Evaluate a symbolic expression given a callback for read values."""
    if isinstance(e, Int):
        return e.value
    if isinstance(e, ReadVal):
        return read_value(e.event)
    if isinstance(e, Not):
        return int(not eval_sym(e.operand, read_value))
    if isinstance(e, BinOp):
        a = eval_sym(e.left, read_value)
        if e.op == "&&":
            return int(bool(a) and bool(eval_sym(e.right, read_value)))
        if e.op == "||":
            return int(bool(a) or bool(eval_sym(e.right, read_value)))
        return apply_op(e.op, a, eval_sym(e.right, read_value))
    raise TypeError(e)


def apply_op(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "xor":
        return a ^ b
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "&&":
        return int(bool(a) and bool(b))
    if op == "||":
        return int(bool(a) or bool(b))
    raise ValueError(op)


@dataclass
class SymbolicProgram:
    """Event structure of a straight-line program plus symbolic values."""

    E: EventStructure
    write_values: Dict[int, object]      # write id -> symbolic expression
    final_regs: Dict[str, object]        # "thread.reg" -> symbolic expression
    cells: Tuple = ()
    init: Dict = field(default_factory=dict)


def event_structure(prog):
    """Events of a loop- and branch-free program, in thread then program order."""
    from .transform import dp_analysis

    dp_paths = dp_analysis(prog)
    events, write_values, final_regs = [], {}, {}
    po, fences = set(), {}
    by_path = {}
    for tid, t in enumerate(prog.threads):
        env, mine, fence_level = {}, [], []
        current_fence = []
        for k, s in enumerate(t.body):
            if isinstance(s, (Fence, LwFence)):
                kind = "full" if isinstance(s, Fence) else "lw"
                current_fence.append((len(mine), kind))
                continue
            if isinstance(s, Assign):
                env[s.reg] = _subst(s.expr, env)
                continue
            if not isinstance(s, (Load, Store)):
                raise UnsupportedProgram(
                    f"oracle needs straight-line code; found {type(s).__name__} in {t.name}")
            eid = len(events)
            if isinstance(s, Load):
                ev = Event(eid, "R", s.ref, None, tid, len(mine), (tid, (k,)))
                val = ReadVal(eid)
                if s.op is not None:
                    val = BinOp(s.op, val, _subst(s.operand, env))
                env[s.reg] = val
            else:
                ev = Event(eid, "W", s.ref, None, tid, len(mine), (tid, (k,)))
                write_values[eid] = _subst(s.expr, env)
            by_path[(tid, (k,))] = eid
            events.append(ev)
            mine.append(eid)
        for i, a in enumerate(mine):
            for j in range(i + 1, len(mine)):
                b = mine[j]
                po.add((a, b))
                level = None
                for pos, kind in current_fence:
                    if i < pos <= j and FENCE_RANK[kind] > FENCE_RANK[level]:
                        level = kind
                fences[(a, b)] = level
        for reg, val in env.items():
            final_regs[f"{t.name}.{reg}"] = val
        # registers never assigned keep their initial value
    for decl in prog.shared:
        for i, ref in enumerate(decl.cells()):
            eid = len(events)
            events.append(Event(eid, "W", ref, decl.init[i], None, None, "init"))
            write_values[eid] = Int(decl.init[i])
    # only locations actually accessed keep their initial write
    used = {e.loc for e in events if not e.is_init}
    events = [e for e in events if not e.is_init or e.loc in used]
    dp = set()
    for tid, pairs in dp_paths.items():
        for pa, pb in pairs:
            a, b = by_path.get((tid, pa)), by_path.get((tid, pb))
            if a is not None and b is not None:
                dp.add((a, b))
    E = EventStructure(tuple(events), frozenset(po), frozenset(dp), fences)
    init = {ref: d.init[i] for d in prog.shared for i, ref in enumerate(d.cells())}
    return SymbolicProgram(E, write_values, final_regs, tuple(prog.cells()), init)


def read_values(sym, X):
    """Values returned by every read under witness X, or None for causal loops."""
    rf = X.rf_map()
    cache, active = {}, set()

    class _Loop(Exception):
        pass

    def value_of_read(r):
        if r in cache:
            return cache[r]
        if r in active:
            raise _Loop()
        active.add(r)
        v = eval_sym(sym.write_values[rf[r]], value_of_read)
        active.discard(r)
        cache[r] = v
        return v

    try:
        for r in rf:
            value_of_read(r)
    except _Loop:
        return None
    return cache


def with_values(sym, X):
    """Event structure with concrete values filled in, or None."""
    vals = read_values(sym, X)
    if vals is None:
        return None
    evs = []
    for e in sym.E.events:
        if e.dir == "R":
            v = vals[e.id]
        else:
            v = eval_sym(sym.write_values[e.id], vals.__getitem__)
        evs.append(Event(e.id, e.dir, e.loc, v, e.proc, e.po_index, e.origin))
    return EventStructure(tuple(evs), sym.E.po, sym.E.dp, sym.E.fences)


def outcome(sym, X):
    """Final registers and memory of the execution, as a tuple of pairs.

    Memory holds the value of the ws-last write of each cell."""
    vals = read_values(sym, X)
    if vals is None:
        return None
    regs = sorted((r, eval_sym(v, vals.__getitem__)) for r, v in sym.final_regs.items())
    last = {loc: order[-1] for loc, order in X.ws}
    mem = []
    for c in sym.cells:
        v = eval_sym(sym.write_values[last[c]], vals.__getitem__) if c in last else sym.init[c]
        mem.append((f"mem:{c}", v))
    return tuple(regs + mem)


def allowed_outcomes(prog, A, max_events=MAX_EVENTS):
    """Final register states of the executions valid on A."""
    A = get_model(A)
    sym = event_structure(prog)
    out = set()
    for X in enumerate_witnesses(sym.E, max_events):
        o = outcome(sym, X)
        if o is None:
            continue
        if valid(sym.E, X, A):
            out.add(o)
    return out


def execution_report(E, X, models=MODEL_CHAIN):
    """JSON-ready description of an execution and its per-model verdicts."""
    return {
        "events": [
            {"id": e.id, "dir": e.dir, "loc": str(e.loc), "val": e.value, "proc": e.proc}
            for e in E.events
        ],
        "ws": sorted([a, b] for a, b in X.ws_pairs()),
        "rf": sorted([w, r] for w, r in X.rf_pairs()),
        "verdicts": {get_model(m).name: valid(E, X, m) for m in models},
    }

"""Abstract event graphs and critical cycles.

The abstract graph has one event per static shared access.  Program order
follows CFG reachability (so accesses inside a loop are ordered both ways)
and competing accesses on different threads are joined by undirected edges
that a cycle may orient as rf, fr or ws.
"""

from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, FrozenSet, List, Optional, Tuple

from .axiomatic import FENCE_RANK, get_model
from .frontend.ast import Ref
from .frontend.cfg import build_cfg

DEFAULT_MAX_LEN = 8
_LEVEL_NAME = {0: None, 1: "lw", 2: "full"}


@dataclass(frozen=True)
class AbstractEvent:
    id: int
    dir: str
    loc: Ref
    proc: int
    cfg_node: int
    line: int
    path: Tuple[int, ...]

    @property
    def name(self):
        return chr(ord("a") + self.id) if self.id < 26 else f"e{self.id}"

    def __str__(self):
        return f"({self.name}) {self.dir}{self.loc}"


@dataclass
class EventGraph:
    events: List[AbstractEvent]
    po: Dict[Tuple[int, int], Optional[str]]   # pair -> strongest fence on a po path
    dp: FrozenSet[Tuple[int, int]]
    cmp: FrozenSet[FrozenSet[int]]
    thread_names: List[str] = field(default_factory=list)
    # pairs ordered by a fence or made safe by cumulativity (see apply_fences)
    fenced: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def __getitem__(self, eid):
        return self.events[eid]

    def by_path(self, proc, path):
        for e in self.events:
            if e.proc == proc and e.path == path:
                return e
        raise KeyError((proc, path))


@dataclass(frozen=True)
class CriticalCycle:
    events: Tuple[int, ...]                       # canonical rotation, min id first
    edges: Tuple[Tuple[str, int, int], ...]       # (po|rf|fr|ws, src, dst) around the cycle
    delay_pairs: FrozenSet[Tuple[str, int, int]]  # (po|rfe, src, dst) relaxed on the model

    def names(self, g):
        return [g[e].name for e in self.events]


@dataclass
class DelaySelection:
    strategy: str
    pairs: FrozenSet[Tuple[str, int, int]] = frozenset()

    def __len__(self):
        return len(self.pairs)

    def po_pairs(self):
        return {(a, b) for role, a, b in self.pairs if role == "po"}

    def rfe_pairs(self):
        return {(a, b) for role, a, b in self.pairs if role == "rfe"}


# -- graph construction ----------------------------------------------------------

def _po_with_fences(tcfg):
    """For every ordered pair of access nodes joined by a CFG path, the
    strongest fence crossed by some such path."""
    fence_rank = {n.id: (2 if n.access == "F" else 1 if n.access == "L" else 0)
                  for n in tcfg.nodes}
    accesses = {n.id for n in tcfg.access_nodes()}
    out = {}
    for src in accesses:
        best = {}
        stack = [(b, 0) for b, _ in tcfg.succ[src]]
        seen = set()
        while stack:
            node, level = stack.pop()
            level = max(level, fence_rank[node])
            if (node, level) in seen:
                continue
            seen.add((node, level))
            if node in accesses:
                best[node] = max(best.get(node, 0), level)
            stack.extend((b, level) for b, _ in tcfg.succ[node])
        for dst, level in best.items():
            if dst != src:
                out[(src, dst)] = level
    return out


def build_event_graph(cfg_or_prog, A=None):
    """Abstract event graph of a program (or of its CFG)."""
    from .transform import dp_analysis

    if hasattr(cfg_or_prog, "threads") and hasattr(cfg_or_prog, "shared"):
        prog = cfg_or_prog
        cfg = build_cfg(prog)
    else:
        cfg = cfg_or_prog
        prog = cfg.program
    cfg.program = prog
    events, node_to_event = [], {}
    for tc in cfg.threads:
        for n in tc.access_nodes():
            ev = AbstractEvent(len(events), n.access, n.loc, tc.thread, n.id, n.line, n.path)
            node_to_event[(tc.thread, n.id)] = ev.id
            events.append(ev)
    po = {}
    for tc in cfg.threads:
        for (a, b), level in _po_with_fences(tc).items():
            po[(node_to_event[(tc.thread, a)], node_to_event[(tc.thread, b)])] = _LEVEL_NAME[level]
    dp = set()
    path_to_event = {(e.proc, e.path): e.id for e in events}
    for tid, pairs in dp_analysis(prog).items():
        for pa, pb in pairs:
            a, b = path_to_event.get((tid, pa)), path_to_event.get((tid, pb))
            if a is not None and b is not None and (a, b) in po:
                dp.add((a, b))
    cmp = set()
    for a in events:
        for b in events:
            if a.id < b.id and a.proc != b.proc and a.loc == b.loc and "W" in (a.dir, b.dir):
                cmp.add(frozenset((a.id, b.id)))
    g = EventGraph(events, po, frozenset(dp), frozenset(cmp), [t.name for t in cfg.threads])
    if A is not None:
        apply_fences(g, A)
    return g


def apply_fences(g, A):
    """Record the po pairs a fence orders on A.

    Cumulativity is resolved per cycle (it depends on the po segments
    adjacent to each rfe edge), see `_relaxed_rfes`.  Fence statements themselves are dropped by the
    instrumentation."""
    A = get_model(A)
    g.fenced = {}
    for (a, b), f in g.po.items():
        if f is not None and A.fence_orders(g[a].dir + g[b].dir, f):
            g.fenced[(a, b)] = f
    return g


# -- cycle enumeration -------------------------------------------------------------

def _cmp_kind(d1, d2):
    return {"WR": "rf", "RW": "fr", "WW": "ws"}.get(d1 + d2)


ALLOWED_CHAINS = {"WW", "WR", "RW", "RWR"}


def _loc_ok(seq, procs, dirs, locs, links):
    """cc-loc over a cyclic event sequence; `links[i]` says whether seq[i] ->
    seq[i+1] is a communication edge."""
    n = len(seq)
    count = Counter(locs[e] for e in seq)
    for loc, c in count.items():
        if c > 3:
            return False
        ps = [procs[e] for e in seq if locs[e] == loc]
        if len(set(ps)) != len(ps):
            return False
    # chains: maximal runs of communication links
    starts = [i for i in range(n) if links[i] and not links[i - 1]]
    if not starts:
        return False
    chains_per_loc = Counter()
    for s in starts:
        chain = [seq[s]]
        i = s
        while links[i]:
            i = (i + 1) % n
            chain.append(seq[i])
        pattern = "".join(dirs[e] for e in chain)
        if pattern not in ALLOWED_CHAINS:
            return False
        chains_per_loc[locs[chain[0]]] += 1
    return all(c == 1 for c in chains_per_loc.values())


def _enumerate(procs_list, segments, link, max_len):
    """Generic cycle search over per-thread segments.

    `segments[p]` lists tuples of 1 or 2 events on thread p; `link(a, b)`
    returns an edge kind for a communication edge a -> b or None."""
    found = {}

    def extend(chain, used, length):
        last = chain[-1][-1]
        first = chain[0][0]
        if len(chain) >= 2:
            k = link(last, first)
            if k is not None:
                yield list(chain)
        for p in procs_list:
            if p in used:
                continue
            for seg in segments[p]:
                if length + len(seg) > max_len:
                    continue
                if link(last, seg[0]) is None:
                    continue
                chain.append(seg)
                used.add(p)
                yield from extend(chain, used, length + len(seg))
                used.discard(p)
                chain.pop()

    for p in procs_list:
        for seg in segments[p]:
            for cyc in extend([seg], {p}, len(seg)):
                seq = [e for s in cyc for e in s]
                m = seq.index(min(seq))
                key = tuple(seq[m:] + seq[:m])
                if key not in found:
                    found[key] = [tuple(s) for s in cyc]
    return found


def _cycle_edges(segs, link):
    edges = []
    for i, seg in enumerate(segs):
        if len(seg) == 2:
            edges.append(("po", seg[0], seg[1]))
        nxt = segs[(i + 1) % len(segs)]
        edges.append((link(seg[-1], nxt[0]), seg[-1], nxt[0]))
    return edges


def _rotate_edges(edges, start):
    for i, (_, a, _) in enumerate(edges):
        if a == start:
            return tuple(edges[i:] + edges[:i])
    return tuple(edges)


def _relaxed_rfes(g, A, edges):
    """rfe edges of a cycle that no cumulative fence makes safe.

    An rfe w -> r is covered by a fenced po segment starting at r
    (A-cumulative) or ending at w (B-cumulative).  One segment yields one
    safe shortcut, so rfes competing for the same segment stay relaxed."""
    rfes = [(a, b) for kind, a, b in edges if kind == "rf"]
    if A.rfe_safe or not rfes:
        return set()
    options = {}
    for w, r in rfes:
        opts = set()
        for kind, a, b in edges:
            f = g.po.get((a, b)) if kind == "po" else None
            if f is None or not A.fence_orders(g[a].dir + g[b].dir, f):
                continue
            a_cum, b_cum = A.cumulative(f)
            if (a == r and a_cum) or (b == w and b_cum):
                opts.add((a, b))
        options[(w, r)] = opts
    # assignments of distinct segments; an rfe left uncovered by some
    # maximum assignment counts as relaxed
    keys = list(options)
    best, uncovered = -1, set()
    for choice in product(*[sorted(options[k]) + [None] for k in keys]):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        missing = {k for k, c in zip(keys, choice) if c is None}
        if len(used) > best:
            best, uncovered = len(used), set(missing)
        elif len(used) == best:
            uncovered |= missing
    return uncovered


def find_critical_cycles(g, A, max_len=DEFAULT_MAX_LEN):
    """Critical cycles of the abstract graph with at least one pair relaxed on A."""
    A = get_model(A)
    procs = sorted({e.proc for e in g.events})
    segments = {p: [] for p in procs}
    for e in g.events:
        segments[e.proc].append((e.id,))
    for (a, b) in sorted(g.po):
        if g[a].loc != g[b].loc:
            segments[g[a].proc].append((a, b))

    def link(a, b):
        ea, eb = g[a], g[b]
        if ea.proc == eb.proc or ea.loc != eb.loc:
            return None
        return _cmp_kind(ea.dir, eb.dir)

    procs_of = {e.id: e.proc for e in g.events}
    dirs = {e.id: e.dir for e in g.events}
    locs = {e.id: e.loc for e in g.events}
    out = []
    for key, segs in found_cycles(procs, segments, link, max_len):
        if not _loc_ok(list(key), procs_of, dirs, locs, _links(segs)):
            continue
        edges = _cycle_edges(segs, link)
        pairs = {("rfe", a, b) for a, b in _relaxed_rfes(g, A, edges)}
        for kind, a, b in edges:
            if kind == "po" and not A.safe_po(dirs[a] + dirs[b], (a, b) in g.dp, False, g.po[(a, b)]):
                pairs.add(("po", a, b))
        if pairs:
            out.append(CriticalCycle(key, _rotate_edges(edges, key[0]), frozenset(pairs)))
    out.sort(key=lambda c: c.events)
    return out


def found_cycles(procs, segments, link, max_len):
    return sorted(_enumerate(procs, segments, link, max_len).items())


def _links(segs):
    """Per position in the flattened cycle: is the outgoing edge communication?"""
    links = []
    for seg in segs:
        if len(seg) == 2:
            links.append(False)
        links.append(True)
    # rotate to match the canonical (min id first) sequence
    seq = [e for s in segs for e in s]
    m = seq.index(min(seq))
    return links[m:] + links[:m]


def concrete_critical_cycles(E, X, A, max_len=DEFAULT_MAX_LEN):
    """Critical cycles of a concrete execution (po ∪ com, initial writes excluded)
    that contain at least one delay pair of A.

    Pairs a cumulative fence makes safe (rfe;fence, fence;rfe) count as
    extra links, so a cycle closed through such a shortcut must be hit too."""
    from .axiomatic import delays, fr_of, safe_edges

    A = get_model(A)
    evs = [e for e in E.events if not e.is_init]
    procs = sorted({e.proc for e in evs})
    segments = {p: [(e.id,) for e in evs if e.proc == p] for p in procs}
    for a, b in sorted(E.po):
        if E[a].loc != E[b].loc:
            segments[E[a].proc].append((a, b))
    rel = {}
    for a, b in X.rf_pairs():
        rel[(a, b)] = "rf"
    for a, b in fr_of(X):
        rel[(a, b)] = "fr"
    for a, b in X.ws_pairs():
        rel[(a, b)] = "ws"
    for a, b in safe_edges(E, X, A):
        if not (E[a].is_init or E[b].is_init):
            rel.setdefault((a, b), "cum")

    def link(a, b):
        if E[a].proc == E[b].proc:
            return None
        return rel.get((a, b))

    dl = delays(E, X, A)
    procs_of = {e.id: e.proc for e in evs}
    dirs = {e.id: e.dir for e in evs}
    locs = {e.id: e.loc for e in evs}
    out = []
    for key, segs in found_cycles(procs, segments, link, max_len):
        edges = _cycle_edges(segs, link)
        # cc-loc constrains com chains; shortcut links are not com
        shortcut = any(kind == "cum" for kind, _, _ in edges)
        if not shortcut and not _loc_ok(list(key), procs_of, dirs, locs, _links(segs)):
            continue
        pairs = {(a, b) for kind, a, b in edges if (a, b) in dl and kind in ("po", "rf")}
        if pairs:
            out.append((key, frozenset(pairs)))
    return out


# -- selection -----------------------------------------------------------------------

STRATEGIES = ("all", "one_per_cycle")


def select_pairs(cycles, A=None, strategy="all"):
    """Pairs to instrument: every delay pair, or a greedy hitting set."""
    strategy = strategy.replace("-", "_")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    for c in cycles:
        if not c.delay_pairs:
            raise AssertionError(f"cycle {c.events} has no delay pair")
    if strategy == "all":
        return DelaySelection(strategy, frozenset(p for c in cycles for p in c.delay_pairs))
    uncovered = list(cycles)
    chosen = set()
    while uncovered:
        counts = Counter(p for c in uncovered for p in c.delay_pairs)
        best = min(counts, key=lambda p: (-counts[p], p[1], p[2], p[0]))
        chosen.add(best)
        uncovered = [c for c in uncovered if best not in c.delay_pairs]
    return DelaySelection(strategy, frozenset(chosen))


# -- reporting -----------------------------------------------------------------------

def cycle_report(g, cycles, A):
    A = get_model(A)
    rep = []
    for c in cycles:
        pairs = []
        for role, a, b in sorted(c.delay_pairs, key=lambda p: (p[1], p[2], p[0])):
            pairs.append({"kind": role, "e1": g[a].name, "e2": g[b].name, "relaxed_on": A.name})
        rep.append({
            "events": [g[e].name for e in c.events],
            "edges": [[k, g[a].name, g[b].name] for k, a, b in c.edges],
            "pairs": pairs,
            "lines": [[g.thread_names[g[e].proc], g[e].line] for e in c.events],
        })
    return rep


def _node_label(g, e):
    return f"{e.name}: {e.dir} {e.loc}\\n{g.thread_names[e.proc]}:{e.line}"


def dot_export(g, cycles=()):
    """DOT digraph: po solid, dp labelled, competing accesses dashed, cycle
    members highlighted."""
    on_cycle = {e for c in cycles for e in c.events}
    cycle_edges = {(a, b) for c in cycles for _, a, b in c.edges}
    lines = ["digraph events {", "  node [shape=box, fontname=\"monospace\"];"]
    for p, name in enumerate(g.thread_names):
        members = [e for e in g.events if e.proc == p]
        if not members:
            continue
        lines.append(f"  subgraph cluster_{p} {{")
        lines.append(f"    label=\"{name}\";")
        for e in members:
            style = ", style=filled, fillcolor=lightpink" if e.id in on_cycle else ""
            lines.append(f"    {e.name} [label=\"{_node_label(g, e)}\"{style}];")
        lines.append("  }")
    for (a, b) in sorted(g.po):
        attrs = []
        if (a, b) in g.dp:
            attrs.append("label=\"dp\"")
        elif g.po[(a, b)]:
            attrs.append(f"label=\"po+{g.po[(a, b)]}\"")
        else:
            attrs.append("label=\"po\"")
        if (a, b) in cycle_edges:
            attrs.append("color=red, penwidth=2")
        lines.append(f"  {g[a].name} -> {g[b].name} [{', '.join(attrs)}];")
    for pair in sorted(tuple(sorted(p)) for p in g.cmp):
        a, b = pair
        attrs = ["dir=both", "style=dashed"]
        if (a, b) in cycle_edges or (b, a) in cycle_edges:
            attrs.append("color=red")
        lines.append(f"  {g[a].name} -> {g[b].name} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"

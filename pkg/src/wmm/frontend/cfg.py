"""Structural control-flow graphs, one per thread."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .ast import Fence, If, Load, LwFence, Ref, Store, While


@dataclass
class CfgNode:
    id: int
    kind: str                      # entry, exit, stmt, branch, loop
    stmt: object = None
    line: int = 0
    access: Optional[str] = None   # "R", "W", "F" (full fence), "L" (lwfence)
    loc: Optional[Ref] = None
    path: Tuple[int, ...] = ()     # position of the statement in the AST


@dataclass
class ThreadCfg:
    thread: int
    name: str
    nodes: List[CfgNode] = field(default_factory=list)
    succ: Dict[int, List[Tuple[int, str]]] = field(default_factory=dict)
    entry: int = 0
    exit: int = 0

    def add(self, kind, stmt=None, path=()):
        nid = len(self.nodes)
        access = loc = None
        if isinstance(stmt, Load):
            access, loc = "R", stmt.ref
        elif isinstance(stmt, Store):
            access, loc = "W", stmt.ref
        elif isinstance(stmt, Fence):
            access = "F"
        elif isinstance(stmt, LwFence):
            access = "L"
        node = CfgNode(nid, kind, stmt, getattr(stmt, "line", 0), access, loc, path)
        self.nodes.append(node)
        self.succ[nid] = []
        return nid

    def edge(self, a, b, label="seq"):
        self.succ[a].append((b, label))

    def access_nodes(self):
        return [n for n in self.nodes if n.access in ("R", "W")]

    def reachable_from(self, nid):
        """Nodes reachable from `nid` by a non-empty path."""
        seen, stack = set(), [b for b, _ in self.succ[nid]]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(b for b, _ in self.succ[n])
        return seen


@dataclass
class Cfg:
    threads: List[ThreadCfg]


def _build_block(g, stmts, preds, prefix):
    """Wire `stmts` after the dangling edges in `preds`; return new dangling edges."""
    for k, s in enumerate(stmts):
        path = prefix + (k,)
        if isinstance(s, If):
            n = g.add("branch", s, path)
            for p, lab in preds:
                g.edge(p, n, lab)
            then_out = _build_block(g, s.then, [(n, "true")], path + (0,))
            else_out = _build_block(g, s.orelse, [(n, "false")], path + (1,))
            preds = then_out + else_out
        elif isinstance(s, While):
            n = g.add("loop", s, path)
            for p, lab in preds:
                g.edge(p, n, lab)
            body_out = _build_block(g, s.body, [(n, "true")], path + (0,))
            for p, lab in body_out:
                g.edge(p, n, "back" if lab == "seq" else lab)
            preds = [(n, "false")]
        else:
            n = g.add("stmt", s, path)
            for p, lab in preds:
                g.edge(p, n, lab)
            preds = [(n, "seq")]
    return preds


def build_cfg(prog):
    """Per-thread CFG with entry/exit nodes; loops keep their back-edges."""
    out = []
    for tid, t in enumerate(prog.threads):
        g = ThreadCfg(tid, t.name)
        g.entry = g.add("entry")
        dangling = _build_block(g, t.body, [(g.entry, "seq")], ())
        g.exit = g.add("exit")
        for p, lab in dangling:
            g.edge(p, g.exit, lab)
        out.append(g)
    return Cfg(out)

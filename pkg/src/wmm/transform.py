"""Instrumentation of delay pairs into an SC program.

Delayed writes go through a per-location FIFO buffer of capacity 2, delayed
reads either read early from another thread's buffer (non-atomic stores) or
are postponed through a delay register resolved later.  Every pair that is
not selected follows the safe exit rule: the earlier event is flushed or
resolved before the later one executes.  Fences only influence which pairs
are relaxed and which guards are emitted, so they are removed from the output.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Set, Tuple

from .axiomatic import get_model
from .cycles import DelaySelection, build_event_graph
from .frontend.ast import (
    Assert, Assign, BinOp, BoundAssert, BuffDrain, BuffFlushOldest, BuffPush, BuffTake,
    DelayResolve, DelaySet, Fence, If, Int, Load, LwFence, Nondet, Reg, Store, While,
    expr_regs, stmt_defs, stmt_uses,
)


# -- dependencies ----------------------------------------------------------------

def _deps(expr, env):
    out = set()
    for r in expr_regs(expr) if expr is not None else ():
        out |= env.get(r, frozenset())
    return out


def _dp_block(stmts, prefix, env, ctrl, pairs):
    """Forward taint propagation; returns the environment after the block."""
    for k, s in enumerate(stmts):
        path = prefix + (k,)
        if isinstance(s, Load):
            srcs = _deps(s.operand, env)
            pairs.update((a, path) for a in srcs)
            env = {**env, s.reg: frozenset(srcs | {path})}
        elif isinstance(s, Assign):
            env = {**env, s.reg: frozenset(_deps(s.expr, env))}
        elif isinstance(s, Store):
            srcs = _deps(s.expr, env) | ctrl
            pairs.update((a, path) for a in srcs)
        elif isinstance(s, If):
            c = ctrl | _deps(s.cond, env)
            env_t = _dp_block(s.then, path + (0,), env, c, pairs)
            env_f = _dp_block(s.orelse, path + (1,), env, c, pairs)
            env = _join(env_t, env_f)
        elif isinstance(s, While):
            # iterate to a fixpoint: taint flows around the back edge
            while True:
                c = ctrl | _deps(s.cond, env)
                after = _join(env, _dp_block(s.body, path + (0,), env, c, pairs))
                if after == env:
                    break
                env = after
    return env


def _join(a, b):
    out = dict(a)
    for r, v in b.items():
        out[r] = out.get(r, frozenset()) | v
    return out


def dp_analysis(prog):
    """Per thread, pairs (load path, access path) related by dp.

    Data and address dependencies follow register def-use chains; branch
    conditions add control dependencies to stores only.
    """
    out = {}
    for tid, t in enumerate(prog.threads):
        pairs = set()
        _dp_block(t.body, (), {}, frozenset(), pairs)
        out[tid] = pairs
    return out


def apply_fences(g, A):
    from .cycles import apply_fences as _apply
    return _apply(g, A)


# -- tagging ---------------------------------------------------------------------

@dataclass
class Tagging:
    """Events tagged d, and why."""

    reasons: Dict[int, Set[str]] = field(default_factory=dict)
    # reads that may be postponed (source of a selected po pair)
    postponed: Set[int] = field(default_factory=set)
    # reads that may take a buffered write of another thread
    early: Set[int] = field(default_factory=set)

    def add(self, e, why):
        self.reasons.setdefault(e, set()).add(why)

    def __contains__(self, e):
        return e in self.reasons

    def __iter__(self):
        return iter(sorted(self.reasons))


def tag_events(g, sel):
    tags = Tagging()
    for role, a, b in sel.pairs:
        if role == "po":
            tags.add(a, "dpo")
            if g[a].dir == "R":
                tags.postponed.add(a)
        else:
            tags.add(a, "drfs")
            tags.add(b, "drft")
            tags.early.add(b)
    return tags


# -- instrumentation ---------------------------------------------------------------

@dataclass
class TransformedProgram:
    program: object
    source: object
    model: str
    selection: DelaySelection
    tags: Tagging
    buffers: Tuple = ()
    delay_registers: Dict[Tuple[int, str], str] = field(default_factory=dict)

    def __getattr__(self, name):
        # behave like the underlying Program for read-only use
        return getattr(self.__dict__["program"], name)


def delay_register(reg):
    return f"delay_{reg}"


def _nd_and(cond):
    return BinOp("&&", cond, Nondet())


def _pending(dreg):
    return BinOp("!=", Reg(dreg), Int(0))


class _Instrumenter:
    def __init__(self, prog, g, sel, A):
        self.prog, self.g, self.sel, self.A = prog, g, sel, A
        self.tags = tag_events(g, sel)
        self.event_at = {(e.proc, e.path): e for e in g.events}
        self.buffers = sorted({g[e].loc for e in self.tags if g[e].dir == "W"},
                              key=lambda r: (r.name, r.index))
        # writer threads per buffered location
        self.writers = {}
        for e in self.tags:
            ev = g[e]
            if ev.dir == "W":
                self.writers.setdefault(ev.loc, set()).add(ev.proc)
        self.delayed = {}  # (tid, reg) -> dreg
        for e in sorted(self.tags.postponed):
            ev = g[e]
            reg = self._stmt(ev.proc, ev.path).reg
            self.delayed[(ev.proc, reg)] = delay_register(reg)

    def _stmt(self, tid, path):
        return self._descend(self.prog.threads[tid].body, path)

    def _descend(self, body, path):
        s = None
        i = 0
        while i < len(path):
            s = body[path[i]]
            if i + 1 < len(path):
                branch = path[i + 1]
                if isinstance(s, If):
                    body = s.then if branch == 0 else s.orelse
                else:
                    body = s.body
            i += 2
        return s

    # guards ------------------------------------------------------------------

    def guards(self, tid, e, line):
        """Safe-exit obligations of earlier tagged events towards `e`."""
        out = []
        seen = set()
        ev = self.g[e]
        for (a, b) in sorted(self.g.po):
            if b != e or a not in self.tags or ("po", a, b) in self.sel.pairs:
                continue
            ea = self.g[a]
            if ea.dir == "W":
                if ea.loc == ev.loc and ev.dir == "R":
                    continue  # store forwarding keeps the read coherent
                key = ("drain", ea.loc)
                if key not in seen:
                    seen.add(key)
                    out.append(BuffDrain(ea.loc, tid, line=line))
            elif a in self.tags.postponed:
                reg = self._stmt(ea.proc, ea.path).reg
                key = ("resolve", reg)
                if key not in seen:
                    seen.add(key)
                    out.append(DelayResolve(reg, self.delayed[(tid, reg)], line=line))
        return out

    def flush_points(self, line):
        return [If(Nondet(), (BuffFlushOldest(loc, line=line),), (), line=line)
                for loc in self.buffers]

    def resolve_points(self, tid, line):
        return [If(_nd_and(_pending(d)), (DelayResolve(r, d, line=line),), (), line=line)
                for (t, r), d in sorted(self.delayed.items()) if t == tid]

    def resolve_uses(self, tid, s):
        regs = stmt_uses(s) | stmt_defs(s)
        return [DelayResolve(r, self.delayed[(tid, r)], line=s.line)
                for r in sorted(regs) if (tid, r) in self.delayed]

    # statements ---------------------------------------------------------------

    def access(self, tid, s, path, in_loop=False):
        ev = self.event_at[(tid, path)]
        e = ev.id
        line = s.line
        out = self.guards(tid, e, line) + self.resolve_uses(tid, s)
        if e not in self.tags:
            out.append(s)
        elif isinstance(s, Store):
            # the previous iteration's write must leave first (coherence);
            # without this, a loop fills the buffer with the thread's own writes
            if in_loop and not any(isinstance(g, BuffDrain) and g.ref == s.ref for g in out):
                out.append(BuffDrain(s.ref, tid, line=line))
            push = (BoundAssert(s.ref, line=line), BuffPush(s.ref, s.expr, tid, line=line))
            out.append(If(Nondet(), push, (s,), line=line))
        else:
            out.extend(self.tagged_read(tid, e, s))
        out.extend(self.flush_points(line))
        out.extend(self.resolve_points(tid, line))
        return out

    def tagged_read(self, tid, e, s):
        line = s.line
        plain = s
        tail = []
        if s.op is not None and e in self.tags.postponed:
            plain = Load(s.reg, s.ref, line=line)
            tail = [Assign(s.reg, BinOp(s.op, Reg(s.reg), s.operand), line=line)]
        options = [(plain,)]
        if e in self.tags.early:
            for w in sorted(self.writers.get(s.ref, ())):
                if w != tid:
                    take = [BuffTake(s.reg, s.ref, w, line=line)]
                    if s.op is not None:
                        take.append(Assign(s.reg, BinOp(s.op, Reg(s.reg), s.operand), line=line))
                    options.append(tuple(take))
        if e in self.tags.postponed:
            options.append((DelaySet(self.delayed[(tid, s.reg)], s.ref, line=line),))
        # fold the alternatives into nested `if (*)` choices
        stmt = options[-1]
        for opt in reversed(options[:-1]):
            stmt = (If(Nondet(), opt, stmt, line=line),)
        return list(stmt) + tail

    def block(self, tid, stmts, prefix, in_loop=False):
        out = []
        for k, s in enumerate(stmts):
            path = prefix + (k,)
            if isinstance(s, (Fence, LwFence)):
                continue
            if isinstance(s, (Load, Store)):
                out.extend(self.access(tid, s, path, in_loop))
            elif isinstance(s, If):
                out.extend(self.resolve_uses(tid, s))
                out.append(replace(s, then=tuple(self.block(tid, s.then, path + (0,), in_loop)),
                                   orelse=tuple(self.block(tid, s.orelse, path + (1,), in_loop))))
            elif isinstance(s, While):
                pre = self.resolve_uses(tid, s)
                body = self.block(tid, s.body, path + (0,), True) + pre
                out.extend(pre)
                out.append(replace(s, body=tuple(body)))
            else:
                out.extend(self.resolve_uses(tid, s))
                out.append(s)
        return out

    def epilogue(self):
        line = self.prog.final_line
        names = [t.name for t in self.prog.threads]
        q = lambda tid, r: f"{names[tid]}.{r}"
        out = []
        for (tid, r), d in sorted(self.delayed.items()):
            out.append(If(_nd_and(_pending(q(tid, d))),
                          (DelayResolve(q(tid, r), q(tid, d), line=line),), (), line=line))
        for loc in self.buffers:
            for tid in sorted(self.writers[loc]):
                out.append(BuffDrain(loc, tid, line=line))
        for (tid, r), d in sorted(self.delayed.items()):
            out.append(DelayResolve(q(tid, r), q(tid, d), line=line))
        return out + list(self.prog.epilogue)

    def run(self):
        threads = tuple(replace(t, body=tuple(self.block(tid, t.body, ())))
                        for tid, t in enumerate(self.prog.threads))
        return replace(self.prog, threads=threads, epilogue=tuple(self.epilogue()))


def strip_fences(prog):
    def block(stmts):
        out = []
        for s in stmts:
            if isinstance(s, (Fence, LwFence)):
                continue
            if isinstance(s, If):
                s = replace(s, then=tuple(block(s.then)), orelse=tuple(block(s.orelse)))
            elif isinstance(s, While):
                s = replace(s, body=tuple(block(s.body)))
            out.append(s)
        return out
    return replace(prog, threads=tuple(replace(t, body=tuple(block(t.body))) for t in prog.threads))


def instrument(prog, sel, A, g=None):
    """Rewrite the selected delay pairs of `prog` for architecture A."""
    A = get_model(A)
    if g is None:
        g = build_event_graph(prog, A)
    for role, a, b in sel.pairs:
        for e in (a, b):
            if not 0 <= e < len(g.events):
                raise ValueError(f"selection refers to unknown event {e}")
    inst = _Instrumenter(prog, g, sel, A)
    out = inst.run() if sel.pairs else strip_fences(prog)
    return TransformedProgram(out, prog, A.name, sel, inst.tags, tuple(inst.buffers),
                              dict(inst.delayed))

"""Bounded explicit-state SC exploration.

Threads are compiled to flat instruction lists after unrolling loops
`loop_unwind` times; a path that would need a further iteration is cut
(treated as an unwinding assumption).  Each statement executes atomically.
Thread-local steps run eagerly after the step that enables them, which does
not change the reachable outcomes since they commute with every other thread.
"""

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from .axiomatic import apply_op
from .frontend.ast import (
    Assert, Assign, BinOp, BoundAssert, BuffDrain, BuffFlushOldest, BuffPush, BuffTake,
    BUFFER_CAPACITY, DelayResolve, DelaySet, Fence, If, Int, Load, LwFence, Not, Nondet,
    Reg, Store, While, expr_regs, has_nondet, stmt_defs, stmt_uses, walk,
)
from .frontend.printer import format_expr, format_stmt

DEFAULT_UNWIND = 2
DEFAULT_MAX_STEPS = 10 ** 6

SAFE, VIOLATED, BOUND = "safe", "violated", "bound_exceeded"
EXIT_CODES = {SAFE: 0, VIOLATED: 1, BOUND: 2}


class TraceMismatch(ValueError):
    pass


@dataclass(frozen=True)
class _Cut:
    """Placeholder for the iterations beyond the unwinding bound."""

    line: int = 0


@dataclass
class Verdict:
    status: str
    trace: List[dict] = field(default_factory=list)
    states: int = 0
    depth: int = 0
    kind: Optional[str] = None          # assert, final, bound
    line: Optional[int] = None
    unwind_cuts: int = 0
    final_state: Optional[dict] = None

    @property
    def exit_code(self):
        return EXIT_CODES[self.status]

    def to_json(self):
        return {
            "status": self.status,
            "trace": self.trace,
            "states": self.states,
            "depth": self.depth,
            "kind": self.kind,
            "line": self.line,
            "unwind_cuts": self.unwind_cuts,
            "final_state": self.final_state,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


# -- compilation -------------------------------------------------------------------

def unroll(stmts, k):
    out = []
    for s in stmts:
        if isinstance(s, While):
            body = unroll(s.body, k)
            rolled = (If(s.cond, (_Cut(s.line),), (), line=s.line),)
            for _ in range(k):
                rolled = (If(s.cond, tuple(body) + rolled, (), line=s.line),)
            out.extend(rolled)
        elif isinstance(s, If):
            out.append(replace(s, then=tuple(unroll(s.then, k)), orelse=tuple(unroll(s.orelse, k))))
        elif isinstance(s, (Fence, LwFence)):
            continue  # no effect under SC
        else:
            out.append(s)
    return out


def _is_opt(s):
    """Generated optional flush/resolve point: `if (*) { p; }` or
    `if (d != 0 && *) { p; }` with a single primitive."""
    if not isinstance(s, If) or s.orelse or len(s.then) != 1:
        return False
    if not isinstance(s.then[0], (BuffFlushOldest, DelayResolve)):
        return False
    c = s.cond
    return isinstance(c, Nondet) or (
        isinstance(c, BinOp) and c.op == "&&" and isinstance(c.right, Nondet)
        and not has_nondet(c.left))


def _compile(stmts, code):
    for s in stmts:
        if _is_opt(s):
            code.append(("opt", s, None))
        elif isinstance(s, If):
            br = len(code)
            code.append(None)
            _compile(s.then, code)
            if s.orelse:
                jmp = len(code)
                code.append(None)
                code[br] = ("br", s, len(code))
                _compile(s.orelse, code)
                code[jmp] = ("jmp", None, len(code))
            else:
                code[br] = ("br", s, len(code))
        elif isinstance(s, _Cut):
            code.append(("cut", s, None))
        else:
            code.append(("do", s, None))
    return code


def _local(ins):
    """Instructions that touch neither shared state nor choices."""
    op, s, _ = ins
    if op == "jmp":
        return True
    if op == "br":
        return not has_nondet(s.cond)
    if op == "do":
        return isinstance(s, Assign) and not has_nondet(s.expr)
    return False


class _Machine:
    def __init__(self, prog, loop_unwind):
        self.source = getattr(prog, "source", prog)
        self.prog = getattr(prog, "program", prog)
        p = self.prog
        self.names = [t.name for t in p.threads]
        self.code = [_compile(unroll(t.body, loop_unwind), []) for t in p.threads]
        self.epi = _compile(unroll(list(p.epilogue), loop_unwind), [])
        self.cells = p.cells()
        self.cell_index = {c: i for i, c in enumerate(self.cells)}
        self.regs = []
        for t in p.threads:
            regs = set()
            for s in walk(t.body):
                regs |= stmt_defs(s) | stmt_uses(s)
            self.regs.append(sorted(regs))
        self.reg_index = [{r: i for i, r in enumerate(rs)} for rs in self.regs]
        # registers reported in outcomes: those of the source program
        self.out_regs = []
        for tid, t in enumerate(self.source.threads):
            regs = set()
            for s in walk(t.body):
                regs |= stmt_defs(s)
            self.out_regs.extend((tid, r) for r in sorted(regs))

    # state = (pcs, regs, mem, bufs, epc); pcs[i] == len(code) means done

    def initial(self):
        pcs = tuple(0 for _ in self.code)
        regs = tuple(tuple(0 for _ in rs) for rs in self.regs)
        mem = []
        for d in self.prog.shared:
            mem.extend(d.init)
        bufs = tuple(() for _ in self.cells)
        return (pcs, regs, tuple(mem), bufs, 0)

    def _reg(self, state, tid, name):
        if "." in name:
            tname, name = name.split(".", 1)
            tid = self.names.index(tname)
        return tid, self.reg_index[tid][name]

    def _eval(self, e, state, tid, nd):
        if isinstance(e, Int):
            return e.value
        if isinstance(e, Reg):
            t, i = self._reg(state, tid, e.name)
            return state[1][t][i]
        if isinstance(e, Nondet):
            return nd.pop(0)
        if isinstance(e, Not):
            return int(not self._eval(e.operand, state, tid, nd))
        if isinstance(e, BinOp):
            a = self._eval(e.left, state, tid, nd)
            b = self._eval(e.right, state, tid, nd)
            return apply_op(e.op, a, b)
        raise TypeError(e)

    def _count_nd(self, e):
        if isinstance(e, Nondet):
            return 1
        if isinstance(e, Not):
            return self._count_nd(e.operand)
        if isinstance(e, BinOp):
            return self._count_nd(e.left) + self._count_nd(e.right)
        return 0

    def _nd_choices(self, e):
        n = self._count_nd(e)
        out = [[]]
        for _ in range(n):
            out = [c + [v] for c in out for v in (0, 1)]
        return out

    def _set_reg(self, state, tid, name, v):
        t, i = self._reg(state, tid, name)
        regs = list(state[1])
        row = list(regs[t])
        row[i] = v
        regs[t] = tuple(row)
        return (state[0], tuple(regs), state[2], state[3], state[4])

    def _read(self, state, tid, ref):
        """Memory value, or the reader's newest buffered write (forwarding)."""
        c = self.cell_index[ref]
        for v, w in reversed(state[3][c]):
            if w == tid:
                return v
        return state[2][c]

    @staticmethod
    def _with(state, mem=None, bufs=None):
        return (state[0], state[1], state[2] if mem is None else mem,
                state[3] if bufs is None else bufs, state[4])

    def _flush(self, state, c):
        bufs = list(state[3])
        (v, _), rest = bufs[c][0], bufs[c][1:]
        bufs[c] = rest
        mem = list(state[2])
        mem[c] = v
        return self._with(state, tuple(mem), tuple(bufs))

    def execute(self, state, tid, s, nd):
        """Effect of a simple statement: new state, 'blocked', or ('fail', kind)."""
        owner = tid if tid is not None else 0
        if isinstance(s, Assign):
            return self._set_reg(state, tid, s.reg, self._eval(s.expr, state, tid, nd))
        if isinstance(s, Load):
            v = self._read(state, tid, s.ref)
            if s.op is not None:
                v = apply_op(s.op, v, self._eval(s.operand, state, tid, nd))
            return self._set_reg(state, tid, s.reg, v)
        if isinstance(s, Store):
            mem = list(state[2])
            mem[self.cell_index[s.ref]] = self._eval(s.expr, state, tid, nd)
            return self._with(state, mem=tuple(mem))
        if isinstance(s, Assert):
            return state if self._eval(s.expr, state, tid, nd) else ("fail", "assert")
        if isinstance(s, BoundAssert):
            ok = len(state[3][self.cell_index[s.ref]]) < BUFFER_CAPACITY
            return state if ok else ("fail", "bound")
        if isinstance(s, BuffPush):
            c = self.cell_index[s.ref]
            if len(state[3][c]) >= BUFFER_CAPACITY:
                return ("fail", "bound")
            bufs = list(state[3])
            bufs[c] = bufs[c] + ((self._eval(s.expr, state, tid, nd), s.thread),)
            return self._with(state, bufs=tuple(bufs))
        if isinstance(s, BuffTake):
            for v, w in reversed(state[3][self.cell_index[s.ref]]):
                if w == s.thread:
                    return self._set_reg(state, tid, s.reg, v)
            return "blocked"
        if isinstance(s, BuffFlushOldest):
            c = self.cell_index[s.ref]
            return self._flush(state, c) if state[3][c] else "blocked"
        if isinstance(s, BuffDrain):
            c = self.cell_index[s.ref]
            while any(w == s.thread for _, w in state[3][c]):
                state = self._flush(state, c)
            return state
        if isinstance(s, DelaySet):
            return self._set_reg(state, tid, s.dreg, self.cell_index[s.ref] + 1)
        if isinstance(s, DelayResolve):
            t, i = self._reg(state, tid, s.dreg)
            token = state[1][t][i]
            if token == 0:
                return state
            v = self._read(state, t, self.cells[token - 1])
            state = self._set_reg(state, t, self.names[t] + "." + s.reg.split(".")[-1], v)
            return self._set_reg(state, t, self.names[t] + "." + s.dreg.split(".")[-1], 0)
        raise TypeError(f"cannot execute {type(s).__name__}")

    # successors ---------------------------------------------------------------

    def code_of(self, tid):
        return self.epi if tid is None else self.code[tid]

    def pc(self, state, tid):
        return state[4] if tid is None else state[0][tid]

    def set_pc(self, state, tid, pc):
        if tid is None:
            return (state[0], state[1], state[2], state[3], pc)
        pcs = list(state[0])
        pcs[tid] = pc
        return (tuple(pcs), state[1], state[2], state[3], state[4])

    def step(self, state, tid):
        """All outcomes of the next instruction of `tid` (else-branch first).

        Yields (label, result) with result a state, 'blocked', 'cut' or
        ('fail', kind)."""
        code = self.code_of(tid)
        pc = self.pc(state, tid)
        op, s, target = code[pc]
        if op == "jmp":
            yield None, self.set_pc(state, tid, target)
            return
        if op == "cut":
            yield None, "cut"
            return
        if op == "opt":
            yield "else", self.set_pc(state, tid, pc + 1)
            guard = s.cond.left if isinstance(s.cond, BinOp) else None
            if guard is None or self._eval(guard, state, tid, []):
                r = self.execute(state, tid, s.then[0], [])
                if r != "blocked":
                    yield "then", self.set_pc(r, tid, pc + 1)
            return
        if op == "br":
            for nd in self._nd_choices(s.cond):
                v = self._eval(s.cond, state, tid, list(nd))
                label = _choice_label(nd, v)
                yield label, self.set_pc(state, tid, pc + 1 if v else target)
            return
        nds = self._nd_choices(s.expr) if isinstance(s, (Assign, Assert)) else [[]]
        for nd in nds:
            r = self.execute(state, tid, s, list(nd))
            if isinstance(r, tuple) and len(r) == 5:
                r = self.set_pc(r, tid, pc + 1)
            yield (_choice_label(nd, None) if nd else None), r

    def enabled(self, state):
        live = [t for t in range(len(self.code)) if state[0][t] < len(self.code[t])]
        if live:
            return live
        if state[4] < len(self.epi):
            return [None]
        return []

    def final_check(self, state):
        fa = self.prog.final_assert
        if fa is None:
            return True
        return bool(self._eval(fa, state, None, []))

    def outcome(self, state):
        regs = []
        for tid, r in self.out_regs:
            regs.append((f"{self.names[tid]}.{r}", state[1][tid][self.reg_index[tid][r]]))
        mem = [(f"mem:{c}", v) for c, v in zip(self.cells, state[2])]
        return tuple(sorted(regs) + mem)

    def describe(self, state):
        out = {"memory": {str(c): v for c, v in zip(self.cells, state[2])}}
        for tid, name in enumerate(self.names):
            out[name] = {r: state[1][tid][i] for i, r in enumerate(self.regs[tid])}
        bufs = {str(c): [list(e) for e in b] for c, b in zip(self.cells, state[3]) if b}
        if bufs:
            out["buffers"] = bufs
        return out

    def entry(self, tid, pc, label):
        op, s, _ = self.code_of(tid)[pc]
        if op == "jmp":
            text = "jmp"
        elif op == "cut":
            text = "unwind"
        elif op == "br":
            text = format_stmt(s)
        elif op == "opt":
            text = f"{format_stmt(s)} {format_stmt(s.then[0])}"
        else:
            text = format_stmt(s)
        return {
            "thread": "epilogue" if tid is None else self.names[tid],
            "line": getattr(s, "line", 0) if s is not None else 0,
            "stmt": text,
            "choice": label,
        }


def _choice_label(nd, v):
    parts = []
    if nd:
        parts.append("*=" + ",".join(map(str, nd)))
    if v is not None:
        parts.append("then" if v else "else")
    return " ".join(parts) or None


# -- search ------------------------------------------------------------------------

class _Search:
    def __init__(self, m, max_steps, dedup, collect):
        self.m = m
        self.max_steps = max_steps
        self.dedup = dedup
        self.collect = collect
        self.visited = set()
        self.states = 0
        self.depth = 0
        self.cuts = 0
        self.outcomes = set()
        self.bound_failures = 0
        self.exceeded = False

    def _advance(self, state, tid, trace):
        """Run the thread-local instructions and optional flush/resolve
        points that follow; returns every resulting (state, trace)."""
        if tid is None:
            return [(state, trace)]
        code = self.m.code[tid]
        done, frontier = [], [(state, trace)]
        while frontier:
            st, tr = frontier.pop(0)
            pc = st[0][tid]
            if pc >= len(code) or not (_local(code[pc]) or code[pc][0] == "opt"):
                done.append((st, tr))
                continue
            # jumps are compiler plumbing, not program steps
            jump = code[pc][0] == "jmp"
            for label, nxt in self.m.step(st, tid):
                frontier.append((nxt, tr if jump else tr + [self.m.entry(tid, pc, label)]))
        return done

    def run(self, state):
        """Iterative DFS; returns (fail kind, trace, state, line) or None."""
        starts = [(state, [])]
        for t in range(len(self.m.code)):
            starts = [x for st, tr in starts for x in self._advance(st, t, tr)]
        stack = list(reversed(starts))
        while stack:
            state, trace = stack.pop()
            if self.dedup:
                if state in self.visited:
                    continue
                self.visited.add(state)
            self.states += 1
            self.depth = max(self.depth, len(trace))
            if self.states > self.max_steps:
                self.exceeded = True
                return None
            en = self.m.enabled(state)
            if not en:
                if self.collect:
                    self.outcomes.add(self.m.outcome(state))
                elif not self.m.final_check(state):
                    return ("final", trace, state, self.m.prog.final_line)
                continue
            succs = []
            for tid in en:
                pc = self.m.pc(state, tid)
                for label, r in self.m.step(state, tid):
                    entry = self.m.entry(tid, pc, label)
                    if r == "blocked":
                        continue
                    if r == "cut":
                        self.cuts += 1
                        continue
                    if isinstance(r, tuple) and r and r[0] == "fail":
                        if r[1] == "bound":
                            self.bound_failures += 1
                        if self.collect and r[1] != "bound":
                            continue
                        return (r[1], trace + [entry], state, entry["line"])
                    step = [] if entry["stmt"] == "jmp" else [entry]
                    succs.extend(self._advance(r, tid, trace + step))
            # push in reverse so the first successor (lowest thread, else first) runs first
            stack.extend(reversed(succs))
        return None


def explore(prog, loop_unwind=DEFAULT_UNWIND, max_steps=DEFAULT_MAX_STEPS, dedup=True):
    """Check inline and final assertions over every SC interleaving."""
    if loop_unwind < 1:
        raise ValueError("loop_unwind must be at least 1")
    m = _Machine(prog, loop_unwind)
    s = _Search(m, max_steps, dedup, collect=False)
    res = s.run(m.initial())
    if res is not None:
        kind, trace, state, line = res
        return Verdict(VIOLATED, trace, s.states, s.depth, kind, line, s.cuts, m.describe(state))
    status = BOUND if s.exceeded else SAFE
    return Verdict(status, [], s.states, s.depth, None, None, s.cuts)


def reachable_outcomes(prog, loop_unwind=DEFAULT_UNWIND, max_steps=DEFAULT_MAX_STEPS,
                       dedup=True, with_stats=False):
    """Final (register, memory) valuations of all complete executions.

    Keys are `thread.reg` for the source program's registers and `mem:loc`
    for every shared cell.  Inline assertion failures end a path without an
    outcome; buffer-bound failures are counted in the stats."""
    m = _Machine(prog, loop_unwind)
    s = _Search(m, max_steps, dedup, collect=True)
    s.run(m.initial())
    if s.exceeded:
        raise RuntimeError(f"state bound {max_steps} exceeded")
    if with_stats:
        return s.outcomes, {"states": s.states, "depth": s.depth,
                            "unwind_cuts": s.cuts, "bound_failures": s.bound_failures}
    return s.outcomes


def _skip_jumps(m, state, tid):
    code = m.code_of(tid)
    while m.pc(state, tid) < len(code) and code[m.pc(state, tid)][0] == "jmp":
        state = m.set_pc(state, tid, code[m.pc(state, tid)][2])
    return state


def replay(prog, trace, loop_unwind=DEFAULT_UNWIND):
    """Re-execute a counterexample trace step by step."""
    if not trace:
        raise TraceMismatch("trace/program mismatch: empty trace")
    m = _Machine(prog, loop_unwind)
    names = {n: i for i, n in enumerate(m.names)}
    state = m.initial()
    depth = 0
    for i, want in enumerate(trace):
        tid = None if want["thread"] == "epilogue" else names.get(want["thread"], -1)
        if tid == -1:
            raise TraceMismatch(f"trace/program mismatch at step {i}: unknown thread")
        code = m.code_of(tid)
        state = _skip_jumps(m, state, tid)
        pc = m.pc(state, tid)
        if pc >= len(code):
            raise TraceMismatch(f"trace/program mismatch at step {i}: thread finished")
        got = None
        for label, r in m.step(state, tid):
            e = m.entry(tid, pc, label)
            if e["stmt"] == want["stmt"] and e["choice"] == want["choice"]:
                got = r
                break
        if got is None or got in ("blocked", "cut"):
            raise TraceMismatch(f"trace/program mismatch at step {i}: {want['stmt']}")
        depth += 1
        if isinstance(got, tuple) and got and got[0] == "fail":
            if i != len(trace) - 1:
                raise TraceMismatch("trace/program mismatch: failure before end of trace")
            return Verdict(VIOLATED, list(trace), depth, depth, got[1], want["line"], 0,
                           m.describe(state))
        state = got
    for tid in [None] + list(range(len(m.names))):
        state = _skip_jumps(m, state, tid)
    if not m.enabled(state) and not m.final_check(state):
        return Verdict(VIOLATED, list(trace), depth, depth, "final", m.prog.final_line, 0,
                       m.describe(state))
    raise TraceMismatch("trace/program mismatch: trace does not end in a failure")

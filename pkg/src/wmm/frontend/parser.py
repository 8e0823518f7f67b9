"""Recursive-descent parser for `.wmm` sources.

Besides the core grammar the parser accepts a few conveniences:

* array initialisers, ``shared flag[2] = {1, 0};``
* parametrised threads, ``thread worker(i in 0..1) { ... }``, expanded into
  one thread per value with indices ``flag[i]`` / ``flag[i+1]`` wrapping
  modulo the array size;
* a load combined with a register expression, ``r2 := y + tmp1``;
* the instrumentation primitives and an ``epilogue { ... }`` block, so that
  dumped instrumented programs parse back.
"""

import re
from dataclasses import replace

from .ast import (
    Assert, Assign, BinOp, BoundAssert, BuffDrain, BuffFlushOldest, BuffPush, BuffTake,
    DelayResolve, DelaySet, Fence, If, Int, Load, LwFence, Not, Nondet, Program, Ref, Reg,
    SharedDecl, Store, Thread, While, WmmSyntaxError, PRECEDENCE, stmt_defs, stmt_uses, walk,
)

KEYWORDS = {
    "shared", "thread", "assert_final", "fence", "lwfence", "if", "else", "while",
    "assert", "xor", "in", "epilogue",
    "buff_push", "buff_take", "buff_flush_oldest", "buff_drain",
    "delay_set", "delay_resolve", "bound_assert",
}

TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|==|!=|&&|\|\||\.\.|[{}()\[\];,*!+\-<=.])
    """,
    re.VERBOSE,
)


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.col})"


def tokenize(text):
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if m is None:
            raise WmmSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "int":
            tokens.append(Token("int", m.group(), line, col))
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind == "sym":
            tokens.append(Token("sym", m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.shared = {}
        self.params = {}

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return WmmSyntaxError(msg, tok.line, tok.col)

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("sym", "kw")

    def expect(self, text):
        if not self.at(text):
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        tok = self.tok
        self.i += 1
        return tok

    def accept(self, text):
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self):
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        tok = self.tok
        self.i += 1
        return tok.text

    def integer(self):
        neg = self.accept("-")
        if self.tok.kind != "int":
            raise self.error(f"expected integer, found {self.tok.text!r}")
        v = int(self.tok.text)
        self.i += 1
        return -v if neg else v

    # -- program -------------------------------------------------------------

    def program(self):
        decls = []
        while self.at("shared"):
            decls.append(self.decl())
        threads = []
        while self.at("thread"):
            threads.extend(self.thread())
        if not threads:
            raise self.error("program needs at least one thread")
        names = set()
        for t in threads:
            if t.name in names:
                raise self.error(f"duplicate thread {t.name!r}")
            names.add(t.name)
        epilogue = ()
        if self.at("epilogue"):
            self.i += 1
            epilogue = self.block()
        final, final_line = None, 0
        if self.at("assert_final"):
            final_line = self.tok.line
            self.i += 1
            self.expect("(")
            final = self.expr()
            self.expect(")")
            self.expect(";")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        prog = Program(tuple(decls), tuple(threads), final, tuple(epilogue), final_line)
        return _resolve(prog)

    def decl(self):
        start = self.expect("shared")
        name = self.ident()
        if name in self.shared:
            raise self.error(f"duplicate declaration of {name!r}", start)
        size, is_array = 1, False
        if self.accept("["):
            size = self.integer()
            if size < 1:
                raise self.error("array size must be at least 1")
            self.expect("]")
            is_array = True
        init = (0,) * size
        if self.accept("="):
            if self.accept("{"):
                vals = [self.integer()]
                while self.accept(","):
                    vals.append(self.integer())
                self.expect("}")
                if len(vals) != size:
                    raise self.error(f"{name!r} has {size} cells but {len(vals)} initial values")
                init = tuple(vals)
            else:
                init = (self.integer(),) * size
        self.expect(";")
        d = SharedDecl(name, size, init, is_array)
        self.shared[name] = d
        return d

    def thread(self):
        self.expect("thread")
        name = self.ident()
        if self.accept("("):
            param = self.ident()
            self.expect("in")
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            self.expect(")")
            start = self.i
            out = []
            for v in range(lo, hi + 1):
                self.i = start
                self.params = {param: v}
                out.append(Thread(f"{name}_{v}", self.block()))
            self.params = {}
            return out
        return [Thread(name, self.block())]

    def block(self):
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            body.append(self.stmt())
        self.expect("}")
        return tuple(body)

    # -- statements ----------------------------------------------------------

    def stmt(self):
        tok = self.tok
        line = tok.line
        if self.accept("fence"):
            self.expect(";")
            return Fence(line=line)
        if self.accept("lwfence"):
            self.expect(";")
            return LwFence(line=line)
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse = self.block() if self.accept("else") else ()
            return If(cond, then, orelse, line=line)
        if self.accept("while"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return While(cond, self.block(), line=line)
        if self.accept("assert"):
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Assert(e, line=line)
        if tok.kind == "kw" and tok.text in _PRIMS:
            self.i += 1
            self.expect("(")
            s = _PRIMS[tok.text](self, line)
            self.expect(")")
            self.expect(";")
            return s
        if tok.kind != "ident":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}")
        if tok.text in self.shared:
            ref = self.sharedref()
            self.expect(":=")
            e = self.expr()
            self.expect(";")
            return Store(ref, e, line=line)
        reg = self.ident()
        if self.at("["):
            raise self.error(f"use of undeclared name {reg!r}", tok)
        self.expect(":=")
        if self.tok.kind == "ident" and self.tok.text in self.shared:
            ref = self.sharedref()
            op = operand = None
            if self.tok.text in ("+", "-", "xor") and self.tok.kind in ("sym", "kw"):
                op = self.tok.text
                self.i += 1
                operand = self.expr()
            self.expect(";")
            return Load(reg, ref, op, operand, line=line)
        e = self.expr()
        self.expect(";")
        return Assign(reg, e, line=line)

    def sharedref(self):
        tok = self.tok
        name = self.ident()
        d = self.shared.get(name)
        if d is None:
            raise self.error(f"use of undeclared name {name!r}", tok)
        if not self.accept("["):
            if d.is_array:
                raise self.error(f"array {name!r} needs an index", tok)
            return Ref(name, 0, False)
        if not d.is_array:
            raise self.error(f"{name!r} is not an array", tok)
        itok = self.tok
        if itok.kind == "ident":
            p = self.ident()
            if p not in self.params:
                raise self.error(f"index must be constant, found {p!r}", itok)
            idx = self.params[p]
            if self.accept("+"):
                idx += self.integer()
            idx %= d.size
        else:
            idx = self.integer()
            if not 0 <= idx < d.size:
                raise self.error(f"index {idx} out of range for {name}[{d.size}]", itok)
        self.expect("]")
        return Ref(name, idx, True)

    def thread_id(self):
        return self.integer()

    # -- expressions ---------------------------------------------------------

    def expr(self, min_prec=1):
        left = self.unary()
        while True:
            t = self.tok
            op = t.text if t.kind in ("sym", "kw") else None
            prec = PRECEDENCE.get(op)
            if prec is None or prec < min_prec:
                return left
            self.i += 1
            right = self.expr(prec + 1)
            left = BinOp(op, left, right)

    def unary(self):
        t = self.tok
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("*"):
            return Nondet()
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "int" or (self.at("-") and self.peek().kind == "int"):
            return Int(self.integer())
        if t.kind == "ident":
            name = self.ident()
            if name in self.shared:
                raise self.error(f"shared location {name!r} cannot be read inside an expression", t)
            if self.accept("."):
                name = f"{name}.{self.ident()}"
            return Reg(name)
        raise self.error(f"expected expression, found {t.text or 'end of input'!r}")


def _p_push(p, line):
    ref = p.sharedref()
    p.expect(",")
    e = p.expr()
    p.expect(",")
    return BuffPush(ref, e, p.thread_id(), line=line)


def _p_take(p, line):
    reg = p.ident()
    p.expect(",")
    ref = p.sharedref()
    p.expect(",")
    return BuffTake(reg, ref, p.thread_id(), line=line)


def _p_drain(p, line):
    ref = p.sharedref()
    p.expect(",")
    return BuffDrain(ref, p.thread_id(), line=line)


def _p_delay_set(p, line):
    dreg = p.ident()
    p.expect(",")
    return DelaySet(dreg, p.sharedref(), line=line)


def _p_resolve(p, line):
    reg = p.ident()
    if p.accept("."):
        reg = f"{reg}.{p.ident()}"
    p.expect(",")
    dreg = p.ident()
    if p.accept("."):
        dreg = f"{dreg}.{p.ident()}"
    return DelayResolve(reg, dreg, line=line)


_PRIMS = {
    "buff_push": _p_push,
    "buff_take": _p_take,
    "buff_flush_oldest": lambda p, line: BuffFlushOldest(p.sharedref(), line=line),
    "buff_drain": _p_drain,
    "delay_set": _p_delay_set,
    "delay_resolve": _p_resolve,
    "bound_assert": lambda p, line: BoundAssert(p.sharedref(), line=line),
}


# -- name resolution -----------------------------------------------------------

def _thread_regs(thread):
    regs = set()
    for s in walk(thread.body):
        regs |= stmt_defs(s)
    return regs


def _resolve(prog):
    """Check register use and qualify global register references."""
    owners = {}
    for t in prog.threads:
        defined = _thread_regs(t)
        for s in walk(t.body):
            for r in stmt_uses(s):
                if r not in defined:
                    raise WmmSyntaxError(f"use of undeclared name {r!r} in thread {t.name}", s.line)
            if isinstance(s, (BuffPush, BuffTake, BuffDrain)) and not 0 <= s.thread < len(prog.threads):
                raise WmmSyntaxError(f"thread id {s.thread} out of range", s.line)
        for r in defined:
            owners.setdefault(r, []).append(t.name)

    def qualify(name, line):
        if "." in name:
            tname, reg = name.split(".", 1)
            if tname not in [t.name for t in prog.threads] or tname not in owners.get(reg, []):
                raise WmmSyntaxError(f"use of undeclared name {name!r}", line)
            return name
        found = owners.get(name, [])
        if not found:
            raise WmmSyntaxError(f"use of undeclared name {name!r}", line)
        if len(found) > 1:
            raise WmmSyntaxError(f"register {name!r} is ambiguous; qualify it as thread.{name}", line)
        return f"{found[0]}.{name}"

    def q_expr(e, line):
        if isinstance(e, Reg):
            return Reg(qualify(e.name, line))
        if isinstance(e, Not):
            return Not(q_expr(e.operand, line))
        if isinstance(e, BinOp):
            return BinOp(e.op, q_expr(e.left, line), q_expr(e.right, line))
        return e

    def q_stmt(s):
        if isinstance(s, Assign):
            return replace(s, reg=qualify(s.reg, s.line), expr=q_expr(s.expr, s.line))
        if isinstance(s, DelayResolve):
            return replace(s, reg=qualify(s.reg, s.line), dreg=qualify(s.dreg, s.line))
        if isinstance(s, If):
            return replace(s, cond=q_expr(s.cond, s.line),
                           then=tuple(map(q_stmt, s.then)), orelse=tuple(map(q_stmt, s.orelse)))
        if isinstance(s, Assert):
            return replace(s, expr=q_expr(s.expr, s.line))
        if isinstance(s, (BuffFlushOldest, BuffDrain, BoundAssert)):
            return s
        raise WmmSyntaxError(f"statement not allowed in epilogue: {type(s).__name__}", s.line)

    final = q_expr(prog.final_assert, prog.final_line) if prog.final_assert is not None else None
    epilogue = tuple(q_stmt(s) for s in prog.epilogue)
    return replace(prog, final_assert=final, epilogue=epilogue)


def parse_program(text):
    """Parse program text into a `Program`; raises `WmmSyntaxError`."""
    return _Parser(text).program()

"""Syntax tree for the toy concurrent language.

Nodes are frozen dataclasses so programs can be compared and hashed.  Source
line numbers ride along on statements but are excluded from equality, which
keeps the print/parse round trip an identity on structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union


class WmmSyntaxError(Exception):
    def __init__(self, msg, line=None, col=None):
        self.msg = msg
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"{line}:{col}: " if col is not None else f"{line}: "
        super().__init__(where + msg)


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Int:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class Nondet:
    """The `*` atom: an arbitrary boolean."""


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Int, Reg, Nondet, Not, BinOp]

BINOPS = ("+", "-", "xor", "==", "!=", "<", "&&", "||")
# binding strength, loosest first
PRECEDENCE = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "+": 4, "-": 4, "xor": 4}


def expr_regs(e):
    """Register names read by an expression."""
    if isinstance(e, Reg):
        return {e.name}
    if isinstance(e, Not):
        return expr_regs(e.operand)
    if isinstance(e, BinOp):
        return expr_regs(e.left) | expr_regs(e.right)
    return set()


def has_nondet(e):
    if isinstance(e, Nondet):
        return True
    if isinstance(e, Not):
        return has_nondet(e.operand)
    if isinstance(e, BinOp):
        return has_nondet(e.left) or has_nondet(e.right)
    return False


# -- statements --------------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    """A shared cell: scalar (index 0) or array element with constant index."""

    name: str
    index: int = 0
    is_array: bool = field(default=False, compare=False)

    def __str__(self):
        return f"{self.name}[{self.index}]" if self.is_array else self.name


@dataclass(frozen=True)
class Assign:
    reg: str
    expr: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Load:
    """`reg := ref` or `reg := ref OP expr` (the loaded value combined with a
    register expression, as in an address-dependency idiom)."""

    reg: str
    ref: Ref
    op: Optional[str] = None
    operand: Optional[Expr] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Store:
    ref: Ref
    expr: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Fence:
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LwFence:
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Tuple["Stmt", ...]
    orelse: Tuple["Stmt", ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Tuple["Stmt", ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Assert:
    expr: Expr
    line: int = field(default=0, compare=False)


# Primitives emitted by the instrumentation.  They never appear in user input
# but the parser accepts them so dumped programs re-parse.

@dataclass(frozen=True)
class BuffPush:
    ref: Ref
    expr: Expr
    thread: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BuffTake:
    reg: str
    ref: Ref
    thread: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BuffFlushOldest:
    ref: Ref
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BuffDrain:
    """Flush oldest entries of `ref` until none written by `thread` remain."""

    ref: Ref
    thread: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class DelaySet:
    dreg: str
    ref: Ref
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class DelayResolve:
    reg: str
    dreg: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BoundAssert:
    ref: Ref
    line: int = field(default=0, compare=False)


Stmt = Union[
    Assign, Load, Store, Fence, LwFence, If, While, Assert,
    BuffPush, BuffTake, BuffFlushOldest, BuffDrain, DelaySet, DelayResolve, BoundAssert,
]

PRIMITIVES = (BuffPush, BuffTake, BuffFlushOldest, BuffDrain, DelaySet, DelayResolve, BoundAssert)

# Capacity of every generated per-location buffer.
BUFFER_CAPACITY = 2


@dataclass(frozen=True)
class SharedDecl:
    name: str
    size: int = 1
    init: Tuple[int, ...] = (0,)
    is_array: bool = False

    def cells(self):
        return [Ref(self.name, i, self.is_array) for i in range(self.size)]


@dataclass(frozen=True)
class Thread:
    name: str
    body: Tuple[Stmt, ...]


@dataclass(frozen=True)
class Program:
    shared: Tuple[SharedDecl, ...]
    threads: Tuple[Thread, ...]
    final_assert: Optional[Expr] = None
    # statements run once after every thread terminated (instrumented
    # programs only: buffer drain and late read resolution)
    epilogue: Tuple[Stmt, ...] = ()
    final_line: int = field(default=0, compare=False)

    def decl(self, name):
        for d in self.shared:
            if d.name == name:
                return d
        raise KeyError(name)

    def cells(self):
        """All shared cells in declaration order."""
        out = []
        for d in self.shared:
            out.extend(d.cells())
        return out

    def thread_index(self, name):
        for i, t in enumerate(self.threads):
            if t.name == name:
                return i
        raise KeyError(name)


def walk(stmts):
    """Yield every statement in a block, depth first, in source order."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk(s.then)
            yield from walk(s.orelse)
        elif isinstance(s, While):
            yield from walk(s.body)


def is_access(s):
    return isinstance(s, (Load, Store))


def stmt_defs(s):
    """Registers written by a statement."""
    if isinstance(s, (Assign, Load, BuffTake, DelayResolve)):
        return {s.reg}
    if isinstance(s, DelaySet):
        return {s.dreg}
    return set()


def stmt_uses(s):
    """Registers read by a statement (conditions included, bodies excluded)."""
    if isinstance(s, (Assign, Store, Assert, BuffPush)):
        return expr_regs(s.expr)
    if isinstance(s, Load):
        return expr_regs(s.operand) if s.operand is not None else set()
    if isinstance(s, (If, While)):
        return expr_regs(s.cond)
    if isinstance(s, DelayResolve):
        return {s.dreg}
    return set()


def thread_registers(thread):
    """Registers of a thread in order of first appearance."""
    seen = {}
    for s in walk(thread.body):
        for r in sorted(stmt_uses(s)) + sorted(stmt_defs(s)):
            seen.setdefault(r, None)
    return list(seen)

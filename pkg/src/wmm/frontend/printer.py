"""Pretty printer producing source that parses back to the same tree."""

from .ast import (
    Assert, Assign, BinOp, BoundAssert, BuffDrain, BuffFlushOldest, BuffPush, BuffTake,
    DelayResolve, DelaySet, Fence, If, Int, Load, LwFence, Not, Nondet, Reg, Store, While,
    PRECEDENCE, walk, stmt_defs,
)

INDENT = "    "


def format_expr(e, parent_prec=0, short=None):
    short = short or {}
    if isinstance(e, Int):
        return str(e.value) if e.value >= 0 or parent_prec == 0 else f"({e.value})"
    if isinstance(e, Reg):
        return short.get(e.name, e.name)
    if isinstance(e, Nondet):
        return "*"
    if isinstance(e, Not):
        inner = e.operand
        text = format_expr(inner, 99, short)
        return f"!{text}"
    if isinstance(e, BinOp):
        prec = PRECEDENCE[e.op]
        # left-associative: the right operand binds one level tighter
        text = f"{format_expr(e.left, prec, short)} {e.op} {format_expr(e.right, prec + 1, short)}"
        return f"({text})" if prec < parent_prec else text
    raise TypeError(e)


def format_stmt(s, short=None):
    """Single-line form of a simple statement (headers for If/While)."""
    f = lambda e: format_expr(e, 0, short)
    reg = lambda r: short.get(r, r) if short else r
    if isinstance(s, Assign):
        return f"{reg(s.reg)} := {f(s.expr)};"
    if isinstance(s, Load):
        if s.op is None:
            return f"{s.reg} := {s.ref};"
        return f"{s.reg} := {s.ref} {s.op} {format_expr(s.operand, PRECEDENCE[s.op] + 1, short)};"
    if isinstance(s, Store):
        return f"{s.ref} := {f(s.expr)};"
    if isinstance(s, Fence):
        return "fence;"
    if isinstance(s, LwFence):
        return "lwfence;"
    if isinstance(s, Assert):
        return f"assert({f(s.expr)});"
    if isinstance(s, If):
        return f"if ({f(s.cond)})"
    if isinstance(s, While):
        return f"while ({f(s.cond)})"
    if isinstance(s, BuffPush):
        return f"buff_push({s.ref}, {f(s.expr)}, {s.thread});"
    if isinstance(s, BuffTake):
        return f"buff_take({s.reg}, {s.ref}, {s.thread});"
    if isinstance(s, BuffFlushOldest):
        return f"buff_flush_oldest({s.ref});"
    if isinstance(s, BuffDrain):
        return f"buff_drain({s.ref}, {s.thread});"
    if isinstance(s, DelaySet):
        return f"delay_set({s.dreg}, {s.ref});"
    if isinstance(s, DelayResolve):
        return f"delay_resolve({reg(s.reg)}, {reg(s.dreg)});"
    if isinstance(s, BoundAssert):
        return f"bound_assert({s.ref});"
    raise TypeError(s)


def _block(stmts, depth, out, short=None):
    pad = INDENT * depth
    for s in stmts:
        if isinstance(s, If):
            out.append(f"{pad}{format_stmt(s, short)} {{")
            _block(s.then, depth + 1, out, short)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _block(s.orelse, depth + 1, out, short)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}{format_stmt(s, short)} {{")
            _block(s.body, depth + 1, out, short)
            out.append(f"{pad}}}")
        else:
            out.append(pad + format_stmt(s, short))


def _short_names(prog):
    """Map qualified `thread.reg` to bare `reg` where that is unambiguous."""
    owners = {}
    for t in prog.threads:
        regs = set()
        for s in walk(t.body):
            regs |= stmt_defs(s)
        for r in regs:
            owners.setdefault(r, []).append(t.name)
    return {f"{ts[0]}.{r}": r for r, ts in owners.items() if len(ts) == 1}


def pretty_print(prog):
    out = []
    for d in prog.shared:
        text = f"shared {d.name}"
        if d.is_array:
            text += f"[{d.size}]"
        if any(d.init):
            if len(set(d.init)) == 1:
                text += f" = {d.init[0]}"
            else:
                text += " = {" + ", ".join(map(str, d.init)) + "}"
        out.append(text + ";")
    if prog.shared:
        out.append("")
    for t in prog.threads:
        out.append(f"thread {t.name} {{")
        _block(t.body, 1, out)
        out.append("}")
        out.append("")
    short = _short_names(prog)
    if prog.epilogue:
        out.append("epilogue {")
        _block(prog.epilogue, 1, out, short)
        out.append("}")
        out.append("")
    if prog.final_assert is not None:
        out.append(f"assert_final({format_expr(prog.final_assert, 0, short)});")
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"

"""Printing of expressions and processes in the concrete grammar.

The output re-parses to a structurally equal term: parentheses are inserted
wherever the parser's precedence or associativity would otherwise regroup.
"""
from __future__ import annotations

from fractions import Fraction

from .expr import (
    BINARY, Add, And, BoolConst, Call, Cmp, Const, Div, Mul, NamedConst, Neg, Not, Or,
    Piecewise, Ref, Sub, Var, refs,
)

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2}
_UNARY = 3
_ATOM = 4


def format_number(q: Fraction) -> str:
    """Exact decimal text for ``q`` when one exists, else ``frac(n, d)``."""
    q = Fraction(q)
    text = _decimal(q)
    if text is not None:
        return text
    return f"frac({q.numerator}, {q.denominator})"


def _decimal(q: Fraction) -> str | None:
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return None
    k = max(twos, fives)
    digits = q.numerator * 10**k // q.denominator
    sign = "-" if digits < 0 else ""
    digits = abs(digits)
    if k == 0:
        # strip trailing zeros into an exponent for very large integers
        s = str(digits)
        if len(s) <= 16:
            return sign + s
        stripped = s.rstrip("0")
        return f"{sign}{stripped}e{len(s) - len(stripped)}"
    if k <= 17:
        s = str(digits).rjust(k + 1, "0")
        return f"{sign}{s[:-k]}.{s[-k:]}"
    return f"{sign}{digits}e-{k}"


def format_prob(q: Fraction) -> str:
    q = Fraction(q)
    text = _decimal(q)
    if text is not None and "e" not in text and not text.startswith("-"):
        return text
    return f"{q.numerator}/{q.denominator}"


def _prec(e) -> int:
    if type(e) in _PREC:
        return _PREC[type(e)]
    if isinstance(e, Neg):
        return _UNARY
    if isinstance(e, Const) and e.value < 0:
        return _UNARY
    return _ATOM


def format_expr(e) -> str:
    if isinstance(e, Const):
        return format_number(e.value)
    if isinstance(e, NamedConst):
        return e.name
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Neg):
        inner = format_expr(e.arg)
        if isinstance(e.arg, Const) or _prec(e.arg) < _ATOM:
            return f"-({inner})"
        return f"-{inner}"
    if isinstance(e, BINARY):
        p = _PREC[type(e)]
        left = format_expr(e.left)
        right = format_expr(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        sep = f" {e.op} " if p == 1 else e.op
        return f"{left}{sep}{right}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Piecewise):
        parts = [f"{format_bool(g)}: {format_expr(v)}" for g, v in e.branches]
        parts.append(f"else: {format_expr(e.default)}")
        return f"piecewise({', '.join(parts)})"
    raise TypeError(f"not an expression: {e!r}")


_BPREC = {Or: 1, And: 2, Not: 3}


def _bprec(b) -> int:
    return _BPREC.get(type(b), 4)


def format_bool(b) -> str:
    if isinstance(b, BoolConst):
        return "true" if b.value else "false"
    if isinstance(b, Cmp):
        return f"{format_expr(b.left)} {b.op} {format_expr(b.right)}"
    if isinstance(b, Not):
        inner = format_bool(b.arg)
        return f"not {inner}" if _bprec(b.arg) >= 3 else f"not ({inner})"
    if isinstance(b, (And, Or)):
        p = _BPREC[type(b)]
        left = format_bool(b.left)
        right = format_bool(b.right)
        if _bprec(b.left) < p:
            left = f"({left})"
        if _bprec(b.right) <= p:
            right = f"({right})"
        op = " & " if isinstance(b, And) else " or "
        return f"{left}{op}{right}"
    raise TypeError(f"not a boolean expression: {b!r}")


# ---------------------------------------------------------------------------
# processes


def format_block(blk) -> str:
    names = ", ".join(blk.vars)
    if len(blk.drift) == 1:
        drift = format_expr(blk.drift[0])
    else:
        drift = "[" + ", ".join(format_expr(e) for e in blk.drift) + "]"
    if len(blk.diffusion) == 1 and len(blk.diffusion[0]) == 1:
        diff = format_expr(blk.diffusion[0][0])
    else:
        rows = ["[" + ", ".join(format_expr(e) for e in row) + "]" for row in blk.diffusion]
        diff = "[" + ", ".join(rows) + "]"
    return f"{{d[{names}] = {drift} dt + {diff} dW & {format_bool(blk.domain)}}}"


def _process(p, ctx: str) -> str:
    # ctx: "system" (anything goes), "seq-first" (no Seq/Parallel),
    # "seq-second" (no Parallel)
    from .syntax import (
        Assign, Cond, Input, Interrupt, Output, Parallel, PChoice, Repeat, Sde, Seq, Skip, Stop,
    )

    if isinstance(p, Skip):
        return "skip"
    if isinstance(p, Stop):
        return "stop"
    if isinstance(p, Assign):
        return f"{p.var} := {format_expr(p.expr)}"
    if isinstance(p, Input):
        return f"{p.chan}?{p.var}"
    if isinstance(p, Output):
        return f"{p.chan}!{format_expr(p.expr)}"
    if isinstance(p, Seq):
        text = f"{_process(p.first, 'seq-first')}; {_process(p.second, 'seq-second')}"
        return f"({text})" if ctx == "seq-first" else text
    if isinstance(p, Parallel):
        text = f"{_process(p.left, 'seq-second')} || {_process(p.right, 'system')}"
        return text if ctx == "system" else f"({text})"
    if isinstance(p, Cond):
        return f"{format_bool(p.guard)} -> {{{_process(p.body, 'system')}}}"
    if isinstance(p, PChoice):
        return f"({_process(p.left, 'system')} |{format_prob(p.prob)}| {_process(p.right, 'system')})"
    if isinstance(p, Repeat):
        if isinstance(p.body, PChoice):
            return f"{_process(p.body, 'system')}*"
        return f"({_process(p.body, 'system')})*"
    if isinstance(p, Sde):
        return format_block(p.block)
    if isinstance(p, Interrupt):
        branches = []
        for b in p.branches:
            ev = b.event
            payload = ev.payload if ev.direction == "?" else format_expr(ev.payload)
            branches.append(
                f"{format_prob(b.weight)}: {ev.chan}{ev.direction}{payload} -> {{{_process(b.body, 'system')}}}"
            )
        return f"{format_block(p.block)} |> [{', '.join(branches)}]"
    raise TypeError(f"not a process: {p!r}")


def _defs_in_order(named: dict) -> list[tuple[str, object]]:
    out, seen = [], set()

    def visit(name):
        if name in seen:
            return
        seen.add(name)
        for dep in refs(named[name]):
            visit(dep)
        out.append((name, named[name]))

    for name in sorted(named):
        visit(name)
    return out


def pretty(p) -> str:
    """Program text for ``p``, with a ``def`` line per named subexpression."""
    from .syntax import named_exprs

    lines = [f"def {name} = {format_expr(body)};" for name, body in _defs_in_order(named_exprs(p))]
    lines.append(_process(p, "system"))
    return "\n".join(lines)

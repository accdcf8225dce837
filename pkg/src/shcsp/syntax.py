"""Process terms of Stochastic Hybrid CSP and static checks over them."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .expr import BoolExpr, Expr, Var, free_vars, lift, refs

INPUT = "?"
OUTPUT = "!"


def _pos():
    return field(default=None, compare=False, repr=False, kw_only=True)


class Process:
    """Base class of process terms.  Equality is structural; ``pos`` is ignored."""

    __slots__ = ()

    def __str__(self):
        from .pretty import pretty

        return pretty(self)


@dataclass(frozen=True)
class Skip(Process):
    pos: tuple | None = _pos()


@dataclass(frozen=True)
class Stop(Process):
    """Terminated process.  Produced by execution, accepted by the parser."""

    pos: tuple | None = _pos()


@dataclass(frozen=True)
class Assign(Process):
    var: str
    expr: Expr
    pos: tuple | None = _pos()

    def __post_init__(self):
        object.__setattr__(self, "expr", lift(self.expr))


@dataclass(frozen=True)
class Input(Process):
    chan: str
    var: str
    pos: tuple | None = _pos()


@dataclass(frozen=True)
class Output(Process):
    chan: str
    expr: Expr
    pos: tuple | None = _pos()

    def __post_init__(self):
        object.__setattr__(self, "expr", lift(self.expr))


@dataclass(frozen=True)
class Seq(Process):
    first: Process
    second: Process
    pos: tuple | None = _pos()


@dataclass(frozen=True)
class Cond(Process):
    guard: BoolExpr
    body: Process
    pos: tuple | None = _pos()


@dataclass(frozen=True)
class Repeat(Process):
    body: Process
    pos: tuple | None = _pos()


@dataclass(frozen=True)
class PChoice(Process):
    left: Process
    prob: Fraction
    right: Process
    pos: tuple | None = _pos()

    def __post_init__(self):
        object.__setattr__(self, "prob", Fraction(self.prob))


@dataclass(frozen=True)
class SdeBlock:
    """``d[vars] = drift dt + diffusion dW & domain``.

    ``diffusion`` is a tuple of rows, one per variable, each of length
    ``brownian_dim``.
    """

    vars: tuple
    drift: tuple
    diffusion: tuple
    domain: BoolExpr
    pos: tuple | None = _pos()

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "drift", tuple(lift(e) for e in self.drift))
        object.__setattr__(
            self, "diffusion", tuple(tuple(lift(e) for e in row) for row in self.diffusion)
        )

    @property
    def dim(self) -> int:
        return len(self.vars)

    @property
    def brownian_dim(self) -> int:
        return len(self.diffusion[0]) if self.diffusion else 0

    def problems(self) -> list[str]:
        out = []
        if not self.vars:
            out.append("SDE block has no variables")
        if len(set(self.vars)) != len(self.vars):
            out.append("SDE block lists a variable twice")
        if len(self.drift) != len(self.vars):
            out.append(f"drift has {len(self.drift)} entries for {len(self.vars)} variables")
        if len(self.diffusion) != len(self.vars):
            out.append(f"diffusion has {len(self.diffusion)} rows for {len(self.vars)} variables")
        widths = {len(r) for r in self.diffusion}
        if len(widths) > 1:
            out.append("diffusion rows have different lengths")
        elif widths and 0 in widths:
            out.append("diffusion needs at least one Brownian dimension")
        return out


@dataclass(frozen=True)
class Sde(Process):
    block: SdeBlock
    pos: tuple | None = _pos()


@dataclass(frozen=True)
class CommEvent:
    direction: str
    chan: str
    payload: object  # variable name for input, Expr for output

    def __post_init__(self):
        if self.direction == OUTPUT:
            object.__setattr__(self, "payload", lift(self.payload))

    def problems(self) -> list[str]:
        if self.direction == INPUT and not isinstance(self.payload, str):
            return [f"input on {self.chan} must bind a variable"]
        if self.direction == OUTPUT and not isinstance(self.payload, Expr):
            return [f"output on {self.chan} must send an expression"]
        if self.direction not in (INPUT, OUTPUT):
            return [f"unknown direction {self.direction!r}"]
        return []

    def as_process(self) -> Process:
        if self.direction == INPUT:
            return Input(self.chan, self.payload)
        return Output(self.chan, self.payload)


@dataclass(frozen=True)
class Branch:
    weight: Fraction
    event: CommEvent
    body: Process

    def __post_init__(self):
        object.__setattr__(self, "weight", Fraction(self.weight))


@dataclass(frozen=True)
class Interrupt(Process):
    block: SdeBlock
    branches: tuple
    pos: tuple | None = _pos()

    def __post_init__(self):
        object.__setattr__(
            self, "branches", tuple(b if isinstance(b, Branch) else Branch(*b) for b in self.branches)
        )


@dataclass(frozen=True)
class Parallel(Process):
    left: Process
    right: Process
    pos: tuple | None = _pos()


# ---------------------------------------------------------------------------


def children(p: Process) -> Iterator[Process]:
    if isinstance(p, (Seq,)):
        yield p.first
        yield p.second
    elif isinstance(p, (PChoice, Parallel)):
        yield p.left
        yield p.right
    elif isinstance(p, (Cond, Repeat)):
        yield p.body
    elif isinstance(p, Interrupt):
        for b in p.branches:
            yield b.body


def walk(p: Process) -> Iterator[Process]:
    yield p
    for c in children(p):
        yield from walk(c)


def channels(p: Process) -> set[str]:
    """Channel alphabet of a process."""
    return {ch for ch, _ in channel_uses(p)}


def channel_uses(p: Process) -> set[tuple[str, str]]:
    """Pairs (channel, direction) occurring in ``p``."""
    out = set()
    for node in walk(p):
        if isinstance(node, Input):
            out.add((node.chan, INPUT))
        elif isinstance(node, Output):
            out.add((node.chan, OUTPUT))
        elif isinstance(node, Interrupt):
            for b in node.branches:
                out.add((b.event.chan, b.event.direction))
    return out


def _expr_nodes(p: Process):
    if isinstance(p, Assign):
        yield p.expr
    elif isinstance(p, Output):
        yield p.expr
    elif isinstance(p, Cond):
        yield p.guard
    elif isinstance(p, (Sde, Interrupt)):
        blk = p.block
        yield from blk.drift
        for row in blk.diffusion:
            yield from row
        yield blk.domain
        if isinstance(p, Interrupt):
            for b in p.branches:
                if b.event.direction == OUTPUT:
                    yield b.event.payload


def variables(p: Process) -> set[str]:
    """Process variables read or written anywhere in ``p``."""
    out: set[str] = set()
    for node in walk(p):
        for e in _expr_nodes(node):
            out |= free_vars(e)
        if isinstance(node, Assign):
            out.add(node.var)
        elif isinstance(node, Input):
            out.add(node.var)
        elif isinstance(node, (Sde, Interrupt)):
            out.update(node.block.vars)
            if isinstance(node, Interrupt):
                for b in node.branches:
                    if b.event.direction == INPUT:
                        out.add(b.event.payload)
    return out


def named_exprs(p: Process) -> dict[str, Expr]:
    out: dict[str, Expr] = {}
    for node in walk(p):
        for e in _expr_nodes(node):
            for name, body in refs(e).items():
                if name in out and out[name] != body:
                    raise ValueError(f"name {name!r} bound to two different expressions")
                out[name] = body
    return out


def sde_blocks(p: Process) -> list[SdeBlock]:
    return [n.block for n in walk(p) if isinstance(n, (Sde, Interrupt))]


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    pos: tuple | None = None

    def format(self, filename: str = "<input>") -> str:
        line, col = self.pos or (1, 1)
        return f"{filename}:{line}:{col}: {self.severity}: {self.message}"


def validate(p: Process) -> list[Diagnostic]:
    """Static well-formedness diagnostics; empty when all invariants hold."""
    diags: list[Diagnostic] = []

    def err(msg, node):
        diags.append(Diagnostic("error", msg, getattr(node, "pos", None)))

    _check(p, err, top=True)
    try:
        named_exprs(p)
    except ValueError as exc:
        err(str(exc), p)
    return diags


def _check(p: Process, err, top: bool) -> None:
    if isinstance(p, Parallel):
        if not top:
            err("parallel composition is only allowed between systems, not inside a sequential process", p)
        shared = sorted(variables(p.left) & variables(p.right))
        for v in shared:
            err(f"shared variable {v}", p)
        uses_l, uses_r = channel_uses(p.left), channel_uses(p.right)
        for ch, d in sorted(uses_l & uses_r):
            side = "input" if d == INPUT else "output"
            err(f"channel {ch} has an {side} end on both sides of the parallel", p)
        _check(p.left, err, top)
        _check(p.right, err, top)
        return
    if isinstance(p, PChoice):
        if not (0 <= p.prob <= 1):
            err(f"probability out of range: {p.prob}", p)
    elif isinstance(p, (Sde, Interrupt)):
        for msg in p.block.problems():
            err(msg, p.block if p.block.pos else p)
        if isinstance(p, Interrupt):
            if not p.branches:
                err("interrupt needs at least one branch", p)
            for b in p.branches:
                if b.weight <= 0:
                    err(f"interrupt weight must be positive, got {b.weight}", p)
                for msg in b.event.problems():
                    err(msg, p)
    elif isinstance(p, Assign):
        if not p.var:
            err("assignment to empty name", p)
    for c in children(p):
        _check(c, err, top=False)


def is_stop(p: Process) -> bool:
    return isinstance(p, Stop)


__all__ = [
    "Process", "Skip", "Stop", "Assign", "Input", "Output", "Seq", "Cond", "Repeat",
    "PChoice", "SdeBlock", "Sde", "CommEvent", "Branch", "Interrupt", "Parallel",
    "Diagnostic", "validate", "channels", "channel_uses", "variables", "sde_blocks",
    "walk", "named_exprs", "INPUT", "OUTPUT", "Var",
]

"""Recursive-descent parser for ``.shcsp`` programs.

Grammar (EBNF)::

    program   = { "def" NAME "=" expr ";" } system
    system    = seq { "||" seq }                       (* right-assoc *)
    seq       = unit [ ";" seq ]                       (* right-assoc *)
    unit      = "skip" | "stop"
              | NAME ":=" expr
              | NAME "?" NAME
              | NAME "!" expr
              | "(" system ")" [ "*" ]
              | "(" system "|" prob "|" system ")" [ "*" ]
              | sde [ "|>" "[" branch { "," branch } "]" ]
              | bexpr "->" "{" system "}"
    branch    = weight ":" NAME ( "?" NAME | "!" expr ) "->" "{" system "}"
    sde       = "{" "d" "[" NAME { "," NAME } "]" "=" tensor "dt"
                [ "+" tensor "dW" ] "&" bexpr "}"
    prob      = NUMBER [ "/" NUMBER ]
    bexpr     = band { "or" band }
    band      = bnot { ( "&" | "and" ) bnot }
    bnot      = "not" bnot | "true" | "false" | expr CMP expr | "(" bexpr ")"
    expr      = term { ( "+" | "-" ) term }
    term      = unary { ( "*" | "/" ) unary }
    unary     = "-" unary | atom
    atom      = NUMBER | "pi" | NAME | NAME "(" expr { "," expr } ")"
              | "frac" "(" INT "," INT ")"
              | "piecewise" "(" bexpr ":" expr { "," bexpr ":" expr } "," "else" ":" expr ")"
              | "(" expr ")"

Inside SDE blocks ``tensor`` is ``expr`` extended with vector literals
``[e, ...]``, matrix literals ``[[e, ...], ...]`` and identities ``I2``,
``I3``...; scalars broadcast over them.  ``-`` directly before a number is
folded into the literal.  ``#`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import (
    FALSE, FUNCTIONS, TRUE, Add, And, Call, Cmp, Const, Div, Expr, Mul, NamedConst, Neg,
    Not, Or, Piecewise, Ref, Sub, Var,
)
from .syntax import (
    INPUT, OUTPUT, Assign, Branch, CommEvent, Cond, Input, Interrupt, Output, Parallel,
    PChoice, Process, Repeat, Sde, SdeBlock, Seq, Skip, Stop,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 1, col: int = 1):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, NAME, OP, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|\|\||\|>|->|<=|>=|[-+*/()\[\]{},;:?!&|<>=@.^~])
    """,
    re.VERBOSE,
)

KEYWORDS = {"skip", "stop", "def", "true", "false", "not", "and", "or", "piecewise", "else", "frac", "pi"}


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "num":
            tokens.append(Token("NUM", m.group(), line, col))
        elif kind == "name":
            tokens.append(Token("NAME", m.group(), line, col))
        elif kind == "op":
            tokens.append(Token("OP", m.group(), line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


_IDENTITY_RE = re.compile(r"I([1-9][0-9]*)$")


class Parser:
    """Expression and process parser over a token list."""

    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0
        self.defs: dict[str, Expr] = {}

    # -- token plumbing -------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "NAME") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}, found {self.describe(self.tok)}")
        t = self.tok
        self.i += 1
        return t

    def expect_name(self) -> Token:
        t = self.tok
        if t.kind != "NAME" or t.text in KEYWORDS:
            self.fail(f"expected a name, found {self.describe(t)}")
        self.i += 1
        return t

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col)

    @staticmethod
    def describe(t: Token) -> str:
        return "end of input" if t.kind == "EOF" else repr(t.text)

    def attempt(self, fn):
        """Run ``fn``; on ParseError rewind and return None."""
        saved = self.i
        try:
            return fn()
        except ParseError:
            self.i = saved
            return None

    # -- programs ----------------------------------------------------------
    def program(self) -> Process:
        while self.at("def"):
            self.i += 1
            name = self.expect_name()
            self.expect("=")
            body = self.expr()
            self.expect(";")
            if name.text in self.defs:
                self.fail(f"{name.text!r} defined twice", name)
            self.defs[name.text] = body
        p = self.system()
        if self.tok.kind != "EOF":
            self.fail(f"unexpected {self.describe(self.tok)}")
        return p

    def system(self) -> Process:
        start = self.tok
        left = self.seq()
        if self.accept("||"):
            return Parallel(left, self.system(), pos=(start.line, start.col))
        return left

    def seq(self) -> Process:
        start = self.tok
        first = self.unit()
        if self.accept(";"):
            return Seq(first, self.seq(), pos=(start.line, start.col))
        return first

    def unit(self) -> Process:
        t = self.tok
        pos = (t.line, t.col)
        if self.accept("skip"):
            return Skip(pos=pos)
        if self.accept("stop"):
            return Stop(pos=pos)
        if t.kind == "NAME" and t.text not in KEYWORDS:
            nxt = self.peek().text
            if nxt == ":=":
                self.i += 2
                return Assign(t.text, self.expr(), pos=pos)
            if nxt == "?":
                self.i += 2
                return Input(t.text, self.expect_name().text, pos=pos)
            if nxt == "!":
                self.i += 2
                return Output(t.text, self.expr(), pos=pos)
        if self.at("{") and self.peek().text == "d" and self.peek(2).text == "[":
            return self.sde_or_interrupt()
        saved = self.i
        guard = self.attempt(self.bexpr)
        if guard is not None and self.accept("->"):
            self.expect("{")
            body = self.system()
            self.expect("}")
            return Cond(guard, body, pos=pos)
        self.i = saved
        if self.accept("("):
            inner = self.system()
            if self.accept("|"):
                prob = self.probability()
                self.expect("|")
                right = self.system()
                self.expect(")")
                node = PChoice(inner, prob, right, pos=pos)
            else:
                self.expect(")")
                node = inner
            if self.accept("*"):
                return Repeat(node, pos=pos)
            return node
        self.fail(f"expected a process, found {self.describe(t)}")

    def probability(self) -> Fraction:
        t = self.tok
        if t.kind != "NUM":
            self.fail(f"expected a probability, found {self.describe(t)}")
        self.i += 1
        value = Fraction(t.text)
        if self.at("/") and self.peek().kind == "NUM":
            self.i += 1
            value /= Fraction(self.tok.text)
            self.i += 1
        return value

    def sde_or_interrupt(self) -> Process:
        t = self.tok
        block = self.sde_block()
        if not self.accept("|>"):
            return Sde(block, pos=(t.line, t.col))
        self.expect("[")
        branches = [self.branch()]
        while self.accept(","):
            branches.append(self.branch())
        self.expect("]")
        return Interrupt(block, tuple(branches), pos=(t.line, t.col))

    def branch(self) -> Branch:
        weight = self.probability()
        self.expect(":")
        chan = self.expect_name().text
        if self.accept("?"):
            event = CommEvent(INPUT, chan, self.expect_name().text)
        elif self.accept("!"):
            event = CommEvent(OUTPUT, chan, self.expr())
        else:
            self.fail("expected '?' or '!' in interrupt branch")
        self.expect("->")
        self.expect("{")
        body = self.system()
        self.expect("}")
        return Branch(weight, event, body)

    def sde_block(self) -> SdeBlock:
        start = self.expect("{")
        self.expect("d")
        self.expect("[")
        names = [self.expect_name().text]
        while self.accept(","):
            names.append(self.expect_name().text)
        self.expect("]")
        self.expect("=")
        drift_tok = self.tok
        drift = self.tensor()
        self.expect("dt")
        diff_tok = self.tok
        if self.accept("+"):
            diff_tok = self.tok
            diffusion = self.tensor()
            self.expect("dW")
        else:
            diffusion = [[Const(0)] for _ in names]
        self.expect("&")
        domain = self.bexpr()
        self.expect("}")
        d = len(names)
        drift = _as_vector(drift, d, drift_tok)
        diffusion = _as_matrix(diffusion, d, diff_tok)
        return SdeBlock(tuple(names), tuple(drift), tuple(tuple(r) for r in diffusion), domain,
                        pos=(start.line, start.col))

    # -- boolean expressions -------------------------------------------------
    def bexpr(self):
        left = self.band()
        while self.accept("or"):
            left = Or(left, self.band())
        return left

    def band(self):
        left = self.bnot()
        while self.at("&") or self.at("and"):
            self.i += 1
            left = And(left, self.bnot())
        return left

    def bnot(self):
        if self.accept("not"):
            return Not(self.bnot())
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        cmp = self.attempt(self._comparison)
        if cmp is not None:
            return cmp
        if self.accept("("):
            inner = self.bexpr()
            self.expect(")")
            return inner
        return self._comparison()

    CMP = ("<", "<=", "=", ">=", ">")

    def _comparison(self):
        left = self.expr()
        t = self.tok
        if t.kind == "OP" and t.text in self.CMP:
            self.i += 1
            return Cmp(left, t.text, self.expr())
        self.fail(f"expected a comparison, found {self.describe(t)}")

    # -- arithmetic ----------------------------------------------------------
    def expr(self, tensor: bool = False):
        left = self.term(tensor)
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            right = self.term(tensor)
            left = _broadcast(Add if op == "+" else Sub, left, right, self)
        return left

    def tensor(self):
        return self.expr(tensor=True)

    def term(self, tensor: bool = False):
        left = self.unary(tensor)
        while self.at("*") or self.at("/"):
            op = self.tok.text
            self.i += 1
            right = self.unary(tensor)
            left = _broadcast(Mul if op == "*" else Div, left, right, self)
        return left

    def unary(self, tensor: bool = False):
        if self.at("-"):
            self.i += 1
            if self.tok.kind == "NUM":
                t = self.tok
                self.i += 1
                return Const(-Fraction(t.text))
            return _broadcast_unary(Neg, self.unary(tensor), self)
        return self.atom(tensor)

    def atom(self, tensor: bool = False):
        t = self.tok
        if t.kind == "NUM":
            self.i += 1
            return Const(Fraction(t.text))
        if self.accept("("):
            inner = self.expr(tensor)
            self.expect(")")
            return inner
        if tensor and self.at("["):
            return self.tensor_literal()
        if t.kind != "NAME":
            self.fail(f"expected an expression, found {self.describe(t)}")
        if t.text == "pi":
            self.i += 1
            return NamedConst("pi")
        if t.text == "frac":
            self.i += 1
            self.expect("(")
            num = self._signed_int()
            self.expect(",")
            den = self._signed_int()
            self.expect(")")
            if den == 0:
                self.fail("zero denominator", t)
            return Const(Fraction(num, den))
        if t.text == "piecewise":
            return self.piecewise()
        if t.text in KEYWORDS or t.text in ("dt", "dW"):
            self.fail(f"unexpected {t.text!r}")
        self.i += 1
        if self.at("("):
            if t.text not in FUNCTIONS:
                self.fail(f"unknown function {t.text!r}", t)
            self.i += 1
            args = [self.expr()]
            while self.accept(","):
                args.append(self.expr())
            self.expect(")")
            if len(args) != FUNCTIONS[t.text]:
                self.fail(f"{t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}", t)
            return Call(t.text, tuple(args))
        if tensor:
            m = _IDENTITY_RE.match(t.text)
            if m:
                n = int(m.group(1))
                return [[Const(1 if i == j else 0) for j in range(n)] for i in range(n)]
        if t.text in self.defs:
            return Ref(t.text, self.defs[t.text])
        return Var(t.text)

    def _signed_int(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "NUM" or not t.text.isdigit():
            self.fail("expected an integer")
        self.i += 1
        return -int(t.text) if neg else int(t.text)

    def piecewise(self):
        self.expect("piecewise")
        self.expect("(")
        branches = []
        while True:
            if self.accept("else"):
                self.expect(":")
                default = self.expr()
                self.expect(")")
                return Piecewise(tuple(branches), default)
            guard = self.bexpr()
            self.expect(":")
            branches.append((guard, self.expr()))
            self.expect(",")

    def tensor_literal(self):
        self.expect("[")
        items = [self.expr(tensor=True)]
        while self.accept(","):
            items.append(self.expr(tensor=True))
        self.expect("]")
        kinds = {isinstance(it, list) for it in items}
        if len(kinds) > 1:
            self.fail("mixed scalars and vectors in literal")
        if isinstance(items[0], list):
            if any(isinstance(c, list) for row in items for c in row):
                self.fail("tensors of rank > 2 are not supported")
            if len({len(r) for r in items}) != 1:
                self.fail("matrix rows have different lengths")
        return items


def _broadcast(cls, left, right, parser: Parser):
    lt, rt = isinstance(left, list), isinstance(right, list)
    if not lt and not rt:
        return cls(left, right)
    if lt and rt:
        if cls in (Mul, Div):
            parser.fail("tensor-by-tensor products are not supported")
        if _shape(left) != _shape(right):
            parser.fail(f"shape mismatch {_shape(left)} vs {_shape(right)}")
        return [_broadcast(cls, a, b, parser) for a, b in zip(left, right)]
    if cls in (Add, Sub):
        parser.fail("cannot add a scalar to a vector or matrix")
    if rt and cls is Div:
        parser.fail("cannot divide by a vector or matrix")
    if lt:
        return [_broadcast(cls, a, right, parser) for a in left]
    return [_broadcast(cls, left, b, parser) for b in right]


def _broadcast_unary(cls, arg, parser):
    if isinstance(arg, list):
        return [_broadcast_unary(cls, a, parser) for a in arg]
    return cls(arg)


def _shape(t):
    if not isinstance(t, list):
        return ()
    return (len(t),) + _shape(t[0])


def _as_vector(t, d: int, tok: Token):
    if not isinstance(t, list):
        if d != 1:
            raise ParseError(f"drift is a scalar but the block has {d} variables", tok.line, tok.col)
        return [t]
    if isinstance(t[0], list):
        raise ParseError("drift must be a vector, got a matrix", tok.line, tok.col)
    if len(t) != d:
        raise ParseError(f"drift has {len(t)} entries for {d} variables", tok.line, tok.col)
    return t


def _as_matrix(t, d: int, tok: Token):
    if not isinstance(t, list):
        if d != 1:
            raise ParseError(f"diffusion is a scalar but the block has {d} variables", tok.line, tok.col)
        return [[t]]
    if not isinstance(t[0], list):
        t = [[e] for e in t]
    if len(t) != d:
        raise ParseError(f"diffusion has {len(t)} rows for {d} variables", tok.line, tok.col)
    return t


def parse(text: str) -> Process:
    """Parse a program; raises :class:`ParseError` with line/column."""
    return Parser(text).program()


def parse_expr(text: str, defs: dict[str, Expr] | None = None) -> Expr:
    p = Parser(text)
    p.defs.update(defs or {})
    e = p.expr()
    if p.tok.kind != "EOF":
        p.fail(f"unexpected {Parser.describe(p.tok)}")
    return e


def parse_bool(text: str, defs: dict[str, Expr] | None = None):
    p = Parser(text)
    p.defs.update(defs or {})
    b = p.bexpr()
    if p.tok.kind != "EOF":
        p.fail(f"unexpected {Parser.describe(p.tok)}")
    return b


def parse_block(text: str, defs: dict[str, Expr] | None = None) -> SdeBlock:
    """Parse a bare SDE block ``{d[...] = ... & B}`` (with optional defs first)."""
    p = Parser(text)
    p.defs.update(defs or {})
    while p.at("def"):
        p.i += 1
        name = p.expect_name()
        p.expect("=")
        body = p.expr()
        p.expect(";")
        p.defs[name.text] = body
    blk = p.sde_block()
    if p.tok.kind != "EOF":
        p.fail(f"unexpected {Parser.describe(p.tok)}")
    return blk

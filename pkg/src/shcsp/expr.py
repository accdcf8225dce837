"""Symbolic arithmetic and boolean expressions.

Expressions are immutable trees.  Constants are exact rationals; floats only
appear when an expression is evaluated against a valuation.  Three evaluators
share one meaning:

``evaluate`` / ``evaluate_bool``
    recursive, scalar, raises :class:`EvaluationError` on any domain failure.
``evaluate_array`` / ``evaluate_bool_array``
    the same over numpy arrays (used to sweep flows and certificate grids).
``evaluate_exact``
    rational arithmetic for the subset without transcendental functions.

:class:`Bytecode` lowers expressions to the flat stack code run by the
compiled integration kernel, and ``python_source`` to the equivalent Python
expression text used by the pure-Python fallback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "sqrt": 1,
    "abs": 1,
    "sgn": 1,
    "min": 2,
    "max": 2,
}
NAMED_CONSTANTS = {"pi": math.pi}
CMP_OPS = ("<", "<=", "=", ">=", ">")


class EvaluationError(ArithmeticError):
    """An expression could not be evaluated (division by zero, unbound name...)."""


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


class Expr:
    """Base class of arithmetic expressions."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, lift(other))

    def __radd__(self, other):
        return Add(lift(other), self)

    def __sub__(self, other):
        return Sub(self, lift(other))

    def __rsub__(self, other):
        return Sub(lift(other), self)

    def __mul__(self, other):
        return Mul(self, lift(other))

    def __rmul__(self, other):
        return Mul(lift(other), self)

    def __truediv__(self, other):
        return Div(self, lift(other))

    def __rtruediv__(self, other):
        return Div(lift(other), self)

    def __neg__(self):
        return Neg(self)

    # comparisons build BoolExpr; == stays structural equality
    def lt(self, other):
        return Cmp(self, "<", lift(other))

    def le(self, other):
        return Cmp(self, "<=", lift(other))

    def eq(self, other):
        return Cmp(self, "=", lift(other))

    def ge(self, other):
        return Cmp(self, ">=", lift(other))

    def gt(self, other):
        return Cmp(self, ">", lift(other))

    def __str__(self):
        from .pretty import format_expr

        return format_expr(self)


def lift(value) -> "Expr":
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return Var(value)
    return Const(value)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", _frac(self.value))


@dataclass(frozen=True)
class NamedConst(Expr):
    name: str

    def __post_init__(self):
        if self.name not in NAMED_CONSTANTS:
            raise ValueError(f"unknown constant {self.name!r}")


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr
    op = "+"


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr
    op = "-"


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr
    op = "*"


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr
    op = "/"


BINARY = (Add, Sub, Mul, Div)


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple

    def __post_init__(self):
        if self.fn not in FUNCTIONS:
            raise ValueError(f"unknown function {self.fn!r}")
        args = tuple(lift(a) for a in self.args)
        if len(args) != FUNCTIONS[self.fn]:
            raise ValueError(f"{self.fn} takes {FUNCTIONS[self.fn]} argument(s), got {len(args)}")
        object.__setattr__(self, "args", args)


@dataclass(frozen=True)
class Piecewise(Expr):
    """First branch whose guard holds, else ``default``."""

    branches: tuple
    default: Expr

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple((g, lift(e)) for g, e in self.branches))
        object.__setattr__(self, "default", lift(self.default))


@dataclass(frozen=True)
class Ref(Expr):
    """A named subexpression.  Evaluates as ``body``, prints as ``name``."""

    name: str
    body: Expr


class BoolExpr:
    __slots__ = ()

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)

    def __str__(self):
        from .pretty import format_bool

        return format_bool(self)


@dataclass(frozen=True)
class BoolConst(BoolExpr):
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True)
class Cmp(BoolExpr):
    left: Expr
    op: str
    right: Expr

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")
        object.__setattr__(self, "left", lift(self.left))
        object.__setattr__(self, "right", lift(self.right))


@dataclass(frozen=True)
class Not(BoolExpr):
    arg: BoolExpr


@dataclass(frozen=True)
class And(BoolExpr):
    left: BoolExpr
    right: BoolExpr


@dataclass(frozen=True)
class Or(BoolExpr):
    left: BoolExpr
    right: BoolExpr


# ---------------------------------------------------------------------------
# traversal helpers


def free_vars(node) -> set[str]:
    """Variable names read by an Expr or BoolExpr (through Refs)."""
    out: set[str] = set()
    _collect_vars(node, out)
    return out


def _collect_vars(node, out):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, (Const, NamedConst, BoolConst)):
        pass
    elif isinstance(node, (Neg, Not)):
        _collect_vars(node.arg, out)
    elif isinstance(node, BINARY) or isinstance(node, (And, Or, Cmp)):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _collect_vars(a, out)
    elif isinstance(node, Piecewise):
        for g, e in node.branches:
            _collect_vars(g, out)
            _collect_vars(e, out)
        _collect_vars(node.default, out)
    elif isinstance(node, Ref):
        _collect_vars(node.body, out)
    else:
        raise TypeError(f"not an expression: {node!r}")


def refs(node) -> dict[str, Expr]:
    """Map of named subexpressions reachable from ``node``.

    Raises ValueError if one name is bound to two different bodies.
    """
    out: dict[str, Expr] = {}
    _collect_refs(node, out)
    return out


def _collect_refs(node, out):
    if isinstance(node, Ref):
        prev = out.get(node.name)
        if prev is not None and prev != node.body:
            raise ValueError(f"name {node.name!r} bound to two different expressions")
        _collect_refs(node.body, out)
        out[node.name] = node.body
    elif isinstance(node, (Neg, Not)):
        _collect_refs(node.arg, out)
    elif isinstance(node, BINARY) or isinstance(node, (And, Or, Cmp)):
        _collect_refs(node.left, out)
        _collect_refs(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _collect_refs(a, out)
    elif isinstance(node, Piecewise):
        for g, e in node.branches:
            _collect_refs(g, out)
            _collect_refs(e, out)
        _collect_refs(node.default, out)


def substitute(node, name: str, repl: Expr):
    """Replace free occurrences of variable ``name`` by ``repl``."""
    if isinstance(node, Var):
        return repl if node.name == name else node
    if isinstance(node, (Const, NamedConst, BoolConst)):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, name, repl))
    if isinstance(node, Not):
        return Not(substitute(node.arg, name, repl))
    if isinstance(node, BINARY) or isinstance(node, (And, Or)):
        return type(node)(substitute(node.left, name, repl), substitute(node.right, name, repl))
    if isinstance(node, Cmp):
        return Cmp(substitute(node.left, name, repl), node.op, substitute(node.right, name, repl))
    if isinstance(node, Call):
        return Call(node.fn, tuple(substitute(a, name, repl) for a in node.args))
    if isinstance(node, Piecewise):
        return Piecewise(
            tuple((substitute(g, name, repl), substitute(e, name, repl)) for g, e in node.branches),
            substitute(node.default, name, repl),
        )
    if isinstance(node, Ref):
        body = substitute(node.body, name, repl)
        return node if body == node.body else body
    raise TypeError(f"not an expression: {node!r}")


def closure(b: BoolExpr) -> BoolExpr:
    """Topological closure of a strict guard: ``<`` becomes ``<=`` and so on.

    Negations are pushed to the comparisons first.
    """
    if isinstance(b, BoolConst):
        return b
    if isinstance(b, Cmp):
        op = {"<": "<=", ">": ">="}.get(b.op, b.op)
        return Cmp(b.left, op, b.right)
    if isinstance(b, And):
        return And(closure(b.left), closure(b.right))
    if isinstance(b, Or):
        return Or(closure(b.left), closure(b.right))
    if isinstance(b, Not):
        return closure(_push_not(b.arg))
    raise TypeError(b)


_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def _push_not(b: BoolExpr) -> BoolExpr:
    if isinstance(b, BoolConst):
        return BoolConst(not b.value)
    if isinstance(b, Cmp):
        if b.op == "=":
            return Or(Cmp(b.left, "<", b.right), Cmp(b.left, ">", b.right))
        return Cmp(b.left, _NEGATED[b.op], b.right)
    if isinstance(b, And):
        return Or(_push_not(b.left), _push_not(b.right))
    if isinstance(b, Or):
        return And(_push_not(b.left), _push_not(b.right))
    if isinstance(b, Not):
        return b.arg
    raise TypeError(b)


# ---------------------------------------------------------------------------
# scalar evaluation


def _sgn(v: float) -> float:
    return float((v > 0) - (v < 0))


def _min(a: float, b: float) -> float:
    return b if b < a else a


def _max(a: float, b: float) -> float:
    return b if b > a else a


def _sqrt(v: float) -> float:
    if v < 0:
        raise EvaluationError(f"sqrt of negative value {v!r}")
    return math.sqrt(v)


def _exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        raise EvaluationError(f"exp overflow at {v!r}") from None


_SCALAR_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "sqrt": _sqrt,
    "abs": abs,
    "sgn": _sgn,
    "min": _min,
    "max": _max,
}


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Add):
        return evaluate(e.left, env) + evaluate(e.right, env)
    if isinstance(e, Sub):
        return evaluate(e.left, env) - evaluate(e.right, env)
    if isinstance(e, Mul):
        return evaluate(e.left, env) * evaluate(e.right, env)
    if isinstance(e, Div):
        num = evaluate(e.left, env)
        den = evaluate(e.right, env)
        if den == 0:
            raise EvaluationError("division by zero")
        return num / den
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Call):
        return float(_SCALAR_FN[e.fn](*(evaluate(a, env) for a in e.args)))
    if isinstance(e, NamedConst):
        return NAMED_CONSTANTS[e.name]
    if isinstance(e, Piecewise):
        for guard, branch in e.branches:
            if evaluate_bool(guard, env):
                return evaluate(branch, env)
        return evaluate(e.default, env)
    if isinstance(e, Ref):
        return evaluate(e.body, env)
    raise TypeError(f"not an expression: {e!r}")


def _compare(a, op, b):
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == "=":
        return a == b
    if op == ">=":
        return a >= b
    return a > b


def evaluate_bool(b: BoolExpr, env: Mapping[str, float]) -> bool:
    # And/Or evaluate both sides, matching the compiled kernel
    if isinstance(b, Cmp):
        return bool(_compare(evaluate(b.left, env), b.op, evaluate(b.right, env)))
    if isinstance(b, And):
        left = evaluate_bool(b.left, env)
        right = evaluate_bool(b.right, env)
        return left and right
    if isinstance(b, Or):
        left = evaluate_bool(b.left, env)
        right = evaluate_bool(b.right, env)
        return left or right
    if isinstance(b, Not):
        return not evaluate_bool(b.arg, env)
    if isinstance(b, BoolConst):
        return b.value
    raise TypeError(f"not a boolean expression: {b!r}")


# ---------------------------------------------------------------------------
# exact evaluation


class NotExact(Exception):
    """Raised when an expression leaves the rationals."""


def evaluate_exact(e: Expr, env: Mapping[str, Fraction]) -> Fraction:
    """Evaluate with rational arithmetic.  Raises NotExact for sin, exp, pi..."""
    if isinstance(e, Var):
        try:
            return _frac(env[e.name])
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg):
        return -evaluate_exact(e.arg, env)
    if isinstance(e, Add):
        return evaluate_exact(e.left, env) + evaluate_exact(e.right, env)
    if isinstance(e, Sub):
        return evaluate_exact(e.left, env) - evaluate_exact(e.right, env)
    if isinstance(e, Mul):
        return evaluate_exact(e.left, env) * evaluate_exact(e.right, env)
    if isinstance(e, Div):
        den = evaluate_exact(e.right, env)
        if den == 0:
            raise EvaluationError("division by zero")
        return evaluate_exact(e.left, env) / den
    if isinstance(e, Call):
        args = [evaluate_exact(a, env) for a in e.args]
        if e.fn == "abs":
            return abs(args[0])
        if e.fn == "sgn":
            return Fraction((args[0] > 0) - (args[0] < 0))
        if e.fn == "min":
            return min(args)
        if e.fn == "max":
            return max(args)
        raise NotExact(e.fn)
    if isinstance(e, Piecewise):
        for guard, branch in e.branches:
            if evaluate_bool_exact(guard, env):
                return evaluate_exact(branch, env)
        return evaluate_exact(e.default, env)
    if isinstance(e, Ref):
        return evaluate_exact(e.body, env)
    if isinstance(e, NamedConst):
        raise NotExact(e.name)
    raise TypeError(f"not an expression: {e!r}")


def evaluate_bool_exact(b: BoolExpr, env) -> bool:
    if isinstance(b, Cmp):
        return bool(_compare(evaluate_exact(b.left, env), b.op, evaluate_exact(b.right, env)))
    if isinstance(b, And):
        return evaluate_bool_exact(b.left, env) and evaluate_bool_exact(b.right, env)
    if isinstance(b, Or):
        return evaluate_bool_exact(b.left, env) or evaluate_bool_exact(b.right, env)
    if isinstance(b, Not):
        return not evaluate_bool_exact(b.arg, env)
    if isinstance(b, BoolConst):
        return b.value
    raise TypeError(b)


# ---------------------------------------------------------------------------
# array evaluation


def evaluate_array(e: Expr, env: Mapping[str, np.ndarray | float]):
    """Vectorized ``evaluate``: variables may be bound to equal-shape arrays."""
    if isinstance(e, Var):
        try:
            return np.asarray(env[e.name], dtype=float)
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, NamedConst):
        return np.float64(NAMED_CONSTANTS[e.name])
    if isinstance(e, Neg):
        return -evaluate_array(e.arg, env)
    if isinstance(e, Add):
        return evaluate_array(e.left, env) + evaluate_array(e.right, env)
    if isinstance(e, Sub):
        return evaluate_array(e.left, env) - evaluate_array(e.right, env)
    if isinstance(e, Mul):
        return evaluate_array(e.left, env) * evaluate_array(e.right, env)
    if isinstance(e, Div):
        num = evaluate_array(e.left, env)
        den = evaluate_array(e.right, env)
        if np.any(den == 0):
            raise EvaluationError("division by zero")
        return num / den
    if isinstance(e, Call):
        args = [evaluate_array(a, env) for a in e.args]
        if e.fn == "sqrt":
            if np.any(args[0] < 0):
                raise EvaluationError("sqrt of negative value")
            return np.sqrt(args[0])
        if e.fn == "exp":
            with np.errstate(over="raise"):
                try:
                    return np.exp(args[0])
                except FloatingPointError:
                    raise EvaluationError("exp overflow") from None
        if e.fn == "min":
            return np.where(args[1] < args[0], args[1], args[0])
        if e.fn == "max":
            return np.where(args[1] > args[0], args[1], args[0])
        fn = {"sin": np.sin, "cos": np.cos, "abs": np.abs, "sgn": np.sign}[e.fn]
        return fn(args[0])
    if isinstance(e, Piecewise):
        guards = [evaluate_bool_array(g, env) for g, _ in e.branches]
        values = [evaluate_array(v, env) for _, v in e.branches]
        default = evaluate_array(e.default, env)
        if not guards:
            return default
        shape = np.broadcast_shapes(*(np.shape(a) for a in guards + values + [default]))
        return np.select(
            [np.broadcast_to(g, shape) for g in guards],
            [np.broadcast_to(v, shape) for v in values],
            np.broadcast_to(default, shape),
        )
    if isinstance(e, Ref):
        return evaluate_array(e.body, env)
    raise TypeError(f"not an expression: {e!r}")


def evaluate_bool_array(b: BoolExpr, env):
    if isinstance(b, Cmp):
        return np.asarray(_compare(evaluate_array(b.left, env), b.op, evaluate_array(b.right, env)))
    if isinstance(b, And):
        return np.logical_and(evaluate_bool_array(b.left, env), evaluate_bool_array(b.right, env))
    if isinstance(b, Or):
        return np.logical_or(evaluate_bool_array(b.left, env), evaluate_bool_array(b.right, env))
    if isinstance(b, Not):
        return np.logical_not(evaluate_bool_array(b.arg, env))
    if isinstance(b, BoolConst):
        return np.asarray(b.value)
    raise TypeError(b)


# ---------------------------------------------------------------------------
# lowering for the integration kernels

OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV = range(7)
OP_SIN, OP_COS, OP_EXP, OP_SQRT, OP_ABS, OP_SGN, OP_MIN, OP_MAX = range(7, 15)
OP_LT, OP_LE, OP_EQ, OP_GE, OP_GT, OP_NOT, OP_AND, OP_OR = range(15, 23)
OP_JIF, OP_JMP = 23, 24

_BIN_OPS = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}
_FN_OPS = {
    "sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "sqrt": OP_SQRT,
    "abs": OP_ABS, "sgn": OP_SGN, "min": OP_MIN, "max": OP_MAX,
}
_CMP_CODES = {"<": OP_LT, "<=": OP_LE, "=": OP_EQ, ">=": OP_GE, ">": OP_GT}


@dataclass
class Bytecode:
    """Flat stack code for a set of expressions sharing one constant pool."""

    ops: list = field(default_factory=list)
    args: list = field(default_factory=list)
    consts: list = field(default_factory=list)
    entries: list = field(default_factory=list)  # (start, end) per program
    max_depth: int = 0

    def _const(self, value: float) -> int:
        self.consts.append(float(value))
        return len(self.consts) - 1

    def add(self, node, index: Mapping[str, int]) -> int:
        """Append a program for ``node``; returns its entry number."""
        start = len(self.ops)
        depth = self._emit(node, index, 0)
        self.max_depth = max(self.max_depth, depth)
        self.entries.append((start, len(self.ops)))
        return len(self.entries) - 1

    def _push(self, op, arg=0):
        self.ops.append(op)
        self.args.append(arg)
        return len(self.ops) - 1

    def _emit(self, e, index, depth) -> int:
        # returns the maximum stack depth reached
        if isinstance(e, Const):
            self._push(OP_CONST, self._const(e.value))
            return depth + 1
        if isinstance(e, NamedConst):
            self._push(OP_CONST, self._const(NAMED_CONSTANTS[e.name]))
            return depth + 1
        if isinstance(e, Var):
            if e.name not in index:
                raise EvaluationError(f"unbound variable {e.name!r}")
            self._push(OP_VAR, index[e.name])
            return depth + 1
        if isinstance(e, Neg):
            d = self._emit(e.arg, index, depth)
            self._push(OP_NEG)
            return d
        if type(e) in _BIN_OPS or isinstance(e, (And, Or, Cmp)):
            d1 = self._emit(e.left, index, depth)
            d2 = self._emit(e.right, index, depth + 1)
            if isinstance(e, Cmp):
                self._push(_CMP_CODES[e.op])
            elif isinstance(e, And):
                self._push(OP_AND)
            elif isinstance(e, Or):
                self._push(OP_OR)
            else:
                self._push(_BIN_OPS[type(e)])
            return max(d1, d2)
        if isinstance(e, Call):
            d = depth
            for i, a in enumerate(e.args):
                d = max(d, self._emit(a, index, depth + i))
            self._push(_FN_OPS[e.fn])
            return d
        if isinstance(e, Not):
            d = self._emit(e.arg, index, depth)
            self._push(OP_NOT)
            return d
        if isinstance(e, BoolConst):
            self._push(OP_CONST, self._const(1.0 if e.value else 0.0))
            return depth + 1
        if isinstance(e, Ref):
            return self._emit(e.body, index, depth)
        if isinstance(e, Piecewise):
            jumps_to_end = []
            d = depth
            for guard, branch in e.branches:
                d = max(d, self._emit(guard, index, depth))
                jif = self._push(OP_JIF)
                d = max(d, self._emit(branch, index, depth))
                jumps_to_end.append(self._push(OP_JMP))
                self.args[jif] = len(self.ops)
            d = max(d, self._emit(e.default, index, depth))
            for j in jumps_to_end:
                self.args[j] = len(self.ops)
            return d
        raise TypeError(f"not an expression: {e!r}")


def python_source(node, index: Mapping[str, int], env_name: str = "v") -> str:
    """Python expression text equivalent to the kernel's evaluation order."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, NamedConst):
        return repr(NAMED_CONSTANTS[node.name])
    if isinstance(node, Var):
        if node.name not in index:
            raise EvaluationError(f"unbound variable {node.name!r}")
        return f"{env_name}[{index[node.name]}]"
    if isinstance(node, Neg):
        return f"(-{python_source(node.arg, index, env_name)})"
    if isinstance(node, Div):
        return f"_div({python_source(node.left, index, env_name)}, {python_source(node.right, index, env_name)})"
    if type(node) in _BIN_OPS:
        return f"({python_source(node.left, index, env_name)} {node.op} {python_source(node.right, index, env_name)})"
    if isinstance(node, Call):
        args = ", ".join(python_source(a, index, env_name) for a in node.args)
        return f"_{node.fn}({args})"
    if isinstance(node, Ref):
        return python_source(node.body, index, env_name)
    if isinstance(node, Piecewise):
        out = python_source(node.default, index, env_name)
        for guard, branch in reversed(node.branches):
            out = (f"({python_source(branch, index, env_name)} if "
                   f"{python_source(guard, index, env_name)} else {out})")
        return out
    if isinstance(node, Cmp):
        op = "==" if node.op == "=" else node.op
        return f"({python_source(node.left, index, env_name)} {op} {python_source(node.right, index, env_name)})"
    if isinstance(node, And):
        return f"({python_source(node.left, index, env_name)} & {python_source(node.right, index, env_name)})"
    if isinstance(node, Or):
        return f"({python_source(node.left, index, env_name)} | {python_source(node.right, index, env_name)})"
    if isinstance(node, Not):
        return f"(not {python_source(node.arg, index, env_name)})"
    if isinstance(node, BoolConst):
        return "True" if node.value else "False"
    raise TypeError(f"not an expression: {node!r}")


def _div(a: float, b: float) -> float:
    if b == 0:
        raise EvaluationError("division by zero")
    return a / b


PY_NAMESPACE = {
    "_div": _div,
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": _exp,
    "_sqrt": _sqrt,
    "_abs": abs,
    "_sgn": _sgn,
    "_min": _min,
    "_max": _max,
}


def compile_function(nodes: Sequence, index: Mapping[str, int]):
    """Compile expressions to one Python function returning a tuple of values."""
    body = ", ".join(python_source(n, index) for n in nodes)
    src = f"def _compiled(v):\n    return ({body}{',' if len(nodes) == 1 else ''})\n"
    namespace = dict(PY_NAMESPACE)
    exec(compile(src, "<shcsp-expr>", "exec"), namespace)
    return namespace["_compiled"]

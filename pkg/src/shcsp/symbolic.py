"""Symbolic differentiation, simplification and the Lie derivative.

``simplify`` expands an expression into a sum of monomials over atoms
(variables, named constants, function calls, piecewise terms and named
definitions), folds constants exactly and combines like terms.  It does no
factoring and no trigonometric rewriting.  Output order within a term is
coefficient, variables by name, then other atoms; terms follow the same
order with the constant term last, so for example the generator of ``y*y``
under the aircraft dynamics prints as ``2*v*y*sin(theta) + 1``.
"""
from __future__ import annotations

import math
from fractions import Fraction

from .expr import (
    Add, Call, Cmp, Const, Div, Expr, Mul, NamedConst, Neg, Piecewise, Ref, Sub, Var, free_vars,
)
from .syntax import SdeBlock

ZERO = Const(0)
ONE = Const(1)


class NonDifferentiable(ValueError):
    """``node`` is not differentiable (everywhere) in the requested variable."""

    def __init__(self, node: Expr, reason: str):
        super().__init__(f"cannot differentiate {node}: {reason}")
        self.node = node
        self.reason = reason


# ---------------------------------------------------------------------------
# normal form: {monomial: coefficient}, monomial = ((key, power), ...)
#
# Atoms are referred to by a string key (hashing a string is cheap, hashing
# a large expression tree is not); _ATOMS maps keys back to atoms for the
# duration of the outermost simplify call.  Keys sort variables first, then
# named constants, then everything else by printed form.

_ATOMS: dict[str, Expr] = {}
_depth = 0


def _key(a: Expr) -> str:
    if isinstance(a, Var):
        k = "0" + a.name
    elif isinstance(a, NamedConst):
        k = "1" + a.name
    else:
        k = "2" + str(a)
    _ATOMS.setdefault(k, a)
    return k


def _mono_mul(m1, m2):
    powers = dict(m1)
    for a, p in m2:
        powers[a] = powers.get(a, 0) + p
    return tuple(sorted((a, p) for a, p in powers.items() if p != 0))


def _add(p1, p2, scale=Fraction(1)):
    out = dict(p1)
    for m, c in p2.items():
        out[m] = out.get(m, Fraction(0)) + scale * c
    return {m: c for m, c in out.items() if c != 0}


# products of sums are distributed only while the result stays this small;
# past it the product is kept as one factor so expansion cannot blow up
EXPAND_LIMIT = 64


def _mul(p1, p2):
    if len(p1) > 1 and len(p2) > 1 and len(p1) * len(p2) > EXPAND_LIMIT:
        a, b = sorted((_expr(p1), _expr(p2)), key=str)
        return _atom(Mul(a, b))
    out: dict = {}
    for m1, c1 in p1.items():
        for m2, c2 in p2.items():
            m = _mono_mul(m1, m2)
            out[m] = out.get(m, Fraction(0)) + c1 * c2
    return {m: c for m, c in out.items() if c != 0}


def _const(c) -> dict:
    c = Fraction(c)
    return {(): c} if c != 0 else {}


def _atom(a: Expr, power: int = 1) -> dict:
    return {((_key(a), power),): Fraction(1)}


def _as_const(p):
    if not p:
        return Fraction(0)
    if len(p) == 1 and () in p:
        return p[()]
    return None


def _is_square(q: Fraction) -> Fraction | None:
    if q < 0:
        return None
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def _fold_call(fn: str, args: list[Fraction]):
    """Exact value of a call on constants, or None."""
    (a, *rest) = args
    if fn == "abs":
        return abs(a)
    if fn == "sgn":
        return Fraction((a > 0) - (a < 0))
    if fn == "min":
        return min(a, rest[0])
    if fn == "max":
        return max(a, rest[0])
    if a == 0 and fn in ("sin", "sqrt"):
        return Fraction(0)
    if a == 0 and fn in ("cos", "exp"):
        return Fraction(1)
    if fn == "sqrt":
        return _is_square(a)
    return None


def _poly(e: Expr) -> dict:
    if isinstance(e, Const):
        return _const(e.value)
    if isinstance(e, (Var, NamedConst, Ref)):
        return _atom(e)
    if isinstance(e, Neg):
        return _add({}, _poly(e.arg), Fraction(-1))
    if isinstance(e, Add):
        return _add(_poly(e.left), _poly(e.right))
    if isinstance(e, Sub):
        return _add(_poly(e.left), _poly(e.right), Fraction(-1))
    if isinstance(e, Mul):
        return _mul(_poly(e.left), _poly(e.right))
    if isinstance(e, Div):
        num = _poly(e.left)
        if not num:
            return {}
        return _mul(num, _inv(e.right))
    if isinstance(e, Call):
        args = [_poly(a) for a in e.args]
        consts = [_as_const(a) for a in args]
        if all(c is not None for c in consts):
            folded = _fold_call(e.fn, consts)
            if folded is not None:
                return _const(folded)
        return _atom(Call(e.fn, tuple(_expr(a) for a in args)))
    if isinstance(e, Piecewise):
        return _atom(Piecewise(tuple((g, simplify(v)) for g, v in e.branches), simplify(e.default)))
    raise TypeError(f"not an expression: {e!r}")


def _inv(e: Expr) -> dict:
    """Normal form of ``1/e``.  Products and quotients in ``e`` are inverted
    factor by factor, so ``1/(b*b)`` becomes ``b**-2`` and meets other
    powers of ``b``."""
    if isinstance(e, Mul):
        return _mul(_inv(e.left), _inv(e.right))
    if isinstance(e, Div):
        return _mul(_inv(e.left), _poly(e.right))
    if isinstance(e, Neg):
        return _add({}, _inv(e.arg), Fraction(-1))
    den = _poly(e)
    c = _as_const(den)
    if c is not None and c != 0:
        return _const(1 / c)
    if len(den) == 1 and c is None:
        (m, coeff), = den.items()
        return {tuple((a, -p) for a, p in m): 1 / coeff}
    return _atom(_expr(den), -1)


def _product(factors: list[Expr]) -> Expr | None:
    out = None
    for f in factors:
        out = f if out is None else Mul(out, f)
    return out


def _term(m, c: Fraction) -> Expr:
    """Term for ``|c| * m``; the sign is handled by the caller."""
    num = [_ATOMS[a] for a, p in m if p > 0 for _ in range(p)]
    den = [_ATOMS[a] for a, p in m if p < 0 for _ in range(-p)]
    c = abs(c)
    head = [] if (c == 1 and num) else [Const(c)]
    top = _product(head + num)
    if not den:
        return top
    return Div(top, _product(den))


def _mono_key(item):
    m, _ = item
    if not m:
        return (1,)
    return (0, tuple((a, -p) for a, p in m))


def _expr(p: dict) -> Expr:
    if not p:
        return ZERO
    out = None
    for m, c in sorted(p.items(), key=_mono_key):
        t = _term(m, c)
        if out is None:
            if c < 0:
                if isinstance(t, Const):
                    t = Const(-t.value)
                elif isinstance(t, (Mul, Div)) and isinstance(_leftmost(t), Const):
                    t = _negate_leftmost(t)
                else:
                    t = _neg_first_factor(t)
            out = t
        elif c < 0:
            out = Sub(out, t)
        else:
            out = Add(out, t)
    return out


def _leftmost(e):
    while isinstance(e, (Mul, Div)):
        e = e.left
    return e


def _negate_leftmost(e):
    if isinstance(e, (Mul, Div)):
        return type(e)(_negate_leftmost(e.left), e.right)
    if isinstance(e, Const):
        return Const(-e.value)
    return Neg(e)


def _neg_first_factor(e):
    if isinstance(e, (Mul, Div)):
        return type(e)(_neg_first_factor(e.left), e.right)
    return Neg(e)


def simplify(e: Expr) -> Expr:
    """Expanded, constant-folded form with like terms combined."""
    global _depth
    _depth += 1
    try:
        return _expr(_poly(e))
    finally:
        _depth -= 1
        if _depth == 0:
            _ATOMS.clear()


# ---------------------------------------------------------------------------
# differentiation


def _d(e: Expr, v: str, partial: bool, singular: list) -> Expr:
    if isinstance(e, (Const, NamedConst)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if v not in free_vars(e):
        return ZERO
    if isinstance(e, Neg):
        return Neg(_d(e.arg, v, partial, singular))
    if isinstance(e, Add):
        return Add(_d(e.left, v, partial, singular), _d(e.right, v, partial, singular))
    if isinstance(e, Sub):
        return Sub(_d(e.left, v, partial, singular), _d(e.right, v, partial, singular))
    if isinstance(e, Mul):
        return Add(Mul(_d(e.left, v, partial, singular), e.right), Mul(e.left, _d(e.right, v, partial, singular)))
    if isinstance(e, Div):
        a, b = e.left, e.right
        da, db = _d(a, v, partial, singular), _d(b, v, partial, singular)
        return Div(Sub(Mul(da, b), Mul(a, db)), Mul(b, b))
    if isinstance(e, Ref):
        try:
            return _d(e.body, v, partial, singular)
        except NonDifferentiable as exc:
            raise NonDifferentiable(e, f"its definition contains {exc.node}: {exc.reason}") from None
    if isinstance(e, Call):
        u = e.args[0]
        du = _d(u, v, partial, singular) if e.fn not in ("min", "max") else None
        if e.fn == "sin":
            return Mul(Call("cos", (u,)), du)
        if e.fn == "cos":
            return Mul(Neg(Call("sin", (u,))), du)
        if e.fn == "exp":
            return Mul(e, du)
        if e.fn == "sqrt":
            return Div(du, Mul(Const(2), e))
        if e.fn in ("abs", "sgn"):
            if not partial:
                raise NonDifferentiable(e, f"{e.fn} is not differentiable where {u} = 0")
            singular.append(Cmp(simplify(u), "=", ZERO))
            return Mul(Call("sgn", (u,)), du) if e.fn == "abs" else ZERO
        raise NonDifferentiable(e, f"{e.fn} is not differentiable where its arguments are equal")
    if isinstance(e, Piecewise):
        raise NonDifferentiable(e, "piecewise terms are not differentiated")
    raise TypeError(f"not an expression: {e!r}")


def diff(e: Expr, v: str, partial: bool = False, singular: list | None = None) -> Expr:
    """Simplified partial derivative of ``e`` in ``v``.

    ``abs``, ``sgn``, ``min``, ``max`` and piecewise terms that depend on
    ``v`` raise :class:`NonDifferentiable`.  With ``partial=True``, ``abs``
    and ``sgn`` are differentiated away from the zero set of their argument
    (``abs' = sgn``, ``sgn' = 0``) and that set is appended to ``singular``.
    """
    out = _d(e, v, partial, singular if singular is not None else [])
    return simplify(out)


def lie_derivative(f: Expr, block: SdeBlock, partial: bool = False, singular: list | None = None) -> Expr:
    """Generator of the block applied to ``f``:

        sum_i b_i df/ds_i + 1/2 sum_ij (sigma sigma^T)_ij d2f/ds_i ds_j
    """
    s = block.vars
    grad = [diff(f, x, partial, singular) for x in s]
    total: Expr = ZERO
    for i, x in enumerate(s):
        total = Add(total, Mul(block.drift[i], grad[i]))
    for i in range(len(s)):
        for j in range(len(s)):
            a_ij: Expr = ZERO
            for k in range(block.brownian_dim):
                a_ij = Add(a_ij, Mul(block.diffusion[i][k], block.diffusion[j][k]))
            if simplify(a_ij) == ZERO:
                continue
            h_ij = diff(grad[i], s[j], partial, singular)
            total = Add(total, Mul(Mul(Const(Fraction(1, 2)), a_ij), h_ij))
    return simplify(total)


__all__ = ["simplify", "diff", "lie_derivative", "NonDifferentiable"]

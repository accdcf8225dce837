"""Certificates for probability bounds of SDE blocks, and bound propagation.

``check_sde_rule`` checks the premises of the supermartingale rule for a
block ``<ds = b dt + sigma dW & B>`` and a certificate function ``f``:

1. ``f`` is twice differentiable (symbolically);
2. at the initial point ``s0`` (which must satisfy ``B``), ``f(s0) <= lam*p``,
   compared in exact rational arithmetic whenever the inputs allow it;
3. ``f >= 0`` and ``Lf <= 0`` on ``B``, checked on a grid over a box;
4. ``f`` is bounded on the box (compact support on ``B`` is assumed).

If all pass, ``P(sup f >= lam) <= f(s0)/lam <= p`` over the whole time the
block runs, and the exit state lies in the closure of ``B``.

Grid checks are evidence, not proof.  When ``f`` is only piecewise smooth
(``abs``/``sgn``), the checks are run away from the singular set and the
result is labelled ``partial``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .expr import (
    TRUE, And, BoolConst, BoolExpr, Cmp, Const, EvaluationError, Expr, NotExact, Var, closure,
    evaluate, evaluate_array, evaluate_bool, evaluate_bool_array, evaluate_bool_exact, evaluate_exact,
    free_vars, substitute,
)
from .pretty import format_bool, format_expr
from .symbolic import NonDifferentiable, diff, lie_derivative
from .syntax import Assign, Cond, PChoice, Process, Sde, SdeBlock, Seq, Skip

CERTIFIED, PARTIAL, REJECTED, UNSUPPORTED = "certified", "partial", "rejected", "unsupported"
GRID_LABEL = "grid evidence, not a proof"


class RequestError(ValueError):
    """Malformed certificate request."""


class CompositionError(ValueError):
    """Bounds cannot be composed (predicates differ or entailment not shown)."""


def _fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError:
            raise RequestError(f"not a number: {x!r}") from None
    raise RequestError(f"not a number: {x!r}")


@dataclass
class CertificateRequest:
    block: SdeBlock
    f: Expr
    lam: Fraction
    p: Fraction
    init: dict  # name -> Fraction, block variables and parameters
    box: dict  # block variable -> (lo, hi)
    grid: int = 101

    def __post_init__(self):
        self.lam = _fraction(self.lam)
        self.p = _fraction(self.p)
        self.init = {k: _fraction(v) for k, v in self.init.items()}
        self.box = {k: (_fraction(lo), _fraction(hi)) for k, (lo, hi) in self.box.items()}
        if self.lam <= 0:
            raise RequestError("lam must be positive")
        if not 0 <= self.p <= 1:
            raise RequestError("p must be in [0, 1]")
        if self.grid < 2:
            raise RequestError("grid must be at least 2")
        missing = [v for v in self.block.vars if v not in self.box]
        if missing:
            raise RequestError(f"box is missing {', '.join(missing)}")
        for v, (lo, hi) in self.box.items():
            if v not in self.block.vars:
                raise RequestError(f"box names {v!r}, which is not a block variable")
            if lo > hi:
                raise RequestError(f"box for {v!r} is empty")
        for v in self.block.vars:
            if v not in self.init:
                raise RequestError(f"init is missing the block variable {v!r}")
        needed = free_vars(self.f) | self._coefficient_vars()
        unbound = sorted(needed - set(self.block.vars) - set(self.init))
        if unbound:
            raise RequestError(f"init is missing parameter(s) {', '.join(unbound)}")

    def _coefficient_vars(self) -> set:
        out = set(free_vars(self.block.domain))
        for e in list(self.block.drift) + [e for row in self.block.diffusion for e in row]:
            out |= free_vars(e)
        return out

    @property
    def params(self) -> dict:
        return {k: v for k, v in self.init.items() if k not in self.block.vars}

    @property
    def s0(self) -> dict:
        return {v: self.init[v] for v in self.block.vars}

    @classmethod
    def from_json(cls, data: Mapping, base: Path | None = None) -> "CertificateRequest":
        from .parser import ParseError, parse, parse_block, parse_expr
        from .syntax import sde_blocks

        try:
            defs = {}
            if "program" in data:
                path = Path(data["program"])
                if base is not None and not path.is_absolute():
                    path = base / path
                program = parse(path.read_text())
                blocks = list(sde_blocks(program))
                idx = int(data.get("block_index", 0))
                if not 0 <= idx < len(blocks):
                    raise RequestError(f"program has no SDE block number {idx}")
                block = blocks[idx]
                from .expr import refs

                for e in list(block.drift) + [block.domain]:
                    defs.update(refs(e))
            elif "block" in data:
                block = parse_block(data["block"])
            else:
                raise RequestError("request needs 'program' or 'block'")
            f = parse_expr(str(data["f"]), defs)
            box = {k: tuple(v) for k, v in data["box"].items()}
            if any(len(v) != 2 for v in box.values()):
                raise RequestError("box entries must be [lo, hi]")
            return cls(block, f, data["lam"], data["p"], dict(data["init"]), box, int(data.get("grid", 101)))
        except RequestError:
            raise
        except ParseError as exc:
            raise RequestError(f"cannot parse request: {exc}") from None
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise RequestError(f"malformed request: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "CertificateRequest":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise RequestError(f"cannot read request: {exc}") from None
        if not isinstance(data, dict):
            raise RequestError("request must be a JSON object")
        return cls.from_json(data, path.parent)


@dataclass
class Premise:
    name: str
    method: str
    passed: bool
    detail: str = ""
    witness: dict | None = None

    def to_json(self) -> dict:
        out = {"name": self.name, "method": self.method, "passed": self.passed, "detail": self.detail}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class CertificateResult:
    verdict: str
    premises: list = field(default_factory=list)
    bound: Fraction | None = None  # f(s0)/lam
    smoothness: str = "smooth"
    premise: str | None = None  # failing premise when rejected
    reason: str | None = None  # when unsupported
    lie: str | None = None
    singular: list = field(default_factory=list)
    closure: str | None = None
    notes: list = field(default_factory=list)

    @property
    def bound_float(self) -> float | None:
        return None if self.bound is None else float(self.bound)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "premise": self.premise,
            "reason": self.reason,
            "smoothness": self.smoothness,
            "bound": self.bound_float,
            "bound_exact": None if self.bound is None else str(self.bound),
            "lie_derivative": self.lie,
            "singular_set": self.singular,
            "exit_closure": self.closure,
            "premises": [p.to_json() for p in self.premises],
            "notes": self.notes,
        }

    def report(self) -> str:
        head = self.verdict
        if self.premise:
            head += f" ({self.premise})"
        if self.reason:
            head += f": {self.reason}"
        lines = [f"verdict: {head}", f"smoothness: {self.smoothness}"]
        if self.lie is not None:
            lines.append(f"Lf = {self.lie}")
        if self.singular:
            lines.append("checked away from: " + ", ".join(self.singular))
        for p in self.premises:
            mark = "pass" if p.passed else "FAIL"
            line = f"  [{mark}] {p.name} by {p.method}"
            if p.detail:
                line += f": {p.detail}"
            lines.append(line)
        if self.bound is not None:
            lines.append(f"implied bound f(s0)/lam = {self.bound} ({float(self.bound):.17g})")
        if self.closure is not None:
            lines.append(f"exit state satisfies {self.closure}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# grid checks


@dataclass
class SignResult:
    passes: bool
    point: dict | None = None
    value: float | None = None
    checked: int = 0
    label: str = GRID_LABEL


def _grid(box: Mapping, grid: int):
    names = list(box)
    axes = [np.linspace(float(lo), float(hi), grid) for lo, hi in box.values()]
    mesh = np.meshgrid(*axes, indexing="ij")
    return names, [m.ravel() for m in mesh]


def _region(B: BoolExpr, box, grid, env, exclude=()):
    names, cols = _grid(box, grid)
    full = dict(env)
    full.update(zip(names, cols))
    n = len(cols[0])
    mask = np.broadcast_to(evaluate_bool_array(B, full), (n,)).copy()
    for s in exclude:
        mask &= ~np.broadcast_to(evaluate_bool_array(s, full), (n,))
    idx = np.flatnonzero(mask)
    sub = dict(env)
    sub.update({k: c[idx] for k, c in zip(names, cols)})
    return names, cols, idx, sub


def check_sign(e: Expr, sign: str, B: BoolExpr, box: Mapping, grid: int,
               env: Mapping[str, float] | None = None, exclude=()) -> SignResult:
    """Evaluate ``e`` at the grid points of ``box`` where ``B`` holds.

    ``sign`` is ``"nonneg"`` or ``"nonpos"``; comparisons against zero are
    exact.  The first violating point (in grid order) is returned.  Points
    where any of the ``exclude`` conditions hold are skipped.
    """
    if sign not in ("nonneg", "nonpos"):
        raise ValueError(f"unknown sign {sign!r}")
    env = {k: float(v) for k, v in (env or {}).items()}
    names, cols, idx, sub = _region(B, box, grid, env, exclude)
    if len(idx) == 0:
        return SignResult(True, checked=0)
    values = np.broadcast_to(np.asarray(evaluate_array(e, sub), dtype=float), idx.shape)
    if np.isnan(values).any():
        k = int(idx[np.flatnonzero(np.isnan(values))[0]])
        raise EvaluationError(f"{e} is undefined at {_point(names, cols, k)}")
    bad = values < 0 if sign == "nonneg" else values > 0
    hits = np.flatnonzero(bad)
    if len(hits):
        j = int(hits[0])
        return SignResult(False, _point(names, cols, int(idx[j])), float(values[j]), len(idx))
    return SignResult(True, checked=len(idx))


def _point(names, cols, k) -> dict:
    return {n: float(c[k]) for n, c in zip(names, cols)}


# ---------------------------------------------------------------------------
# the SDE rule


def _exact_or_float(e, env):
    try:
        return evaluate_exact(e, env), "exact rational arithmetic"
    except NotExact:
        return Fraction(evaluate(e, {k: float(v) for k, v in env.items()})), "binary64 arithmetic"


def _holds_exact(b, env):
    try:
        return evaluate_bool_exact(b, env), "exact rational arithmetic"
    except NotExact:
        return evaluate_bool(b, {k: float(v) for k, v in env.items()}), "binary64 arithmetic"


def check_sde_rule(req: CertificateRequest) -> CertificateResult:
    block = req.block
    res = CertificateResult(verdict=UNSUPPORTED, closure=format_bool(closure(block.domain)))
    res.notes.append("the bound covers the whole interval the block runs, [o, o+d]")
    res.notes.append("compact support of f on B is assumed, not checked")

    # 1. smoothness
    singular: list = []
    try:
        for x in block.vars:
            g = diff(req.f, x)
            for y in block.vars:
                diff(g, y)
        lf = lie_derivative(req.f, block)
        res.premises.append(Premise("f is C2", "symbolic differentiation", True))
    except NonDifferentiable as exc:
        res.smoothness = "non-C2-detected"
        res.premises.append(Premise("f is C2", "symbolic differentiation", False, str(exc)))
        try:
            lf = lie_derivative(req.f, block, partial=True, singular=singular)
        except NonDifferentiable as exc2:
            res.reason = f"f is not twice differentiable: {exc2}"
            return res
        uniq = []
        for s in singular:
            if s not in uniq:
                uniq.append(s)
        singular = uniq
        res.singular = [format_bool(s) for s in singular]
    res.lie = format_expr(lf)

    # 2. initial premise
    env0 = dict(req.init)
    in_b, method = _holds_exact(block.domain, env0)
    if not in_b:
        res.premises.append(Premise("s0 in B", method, False, f"B is false at s0 = {_fmt(req.s0)}"))
        res.verdict, res.premise = REJECTED, "initial"
        return res
    f0, method = _exact_or_float(req.f, env0)
    res.bound = f0 / req.lam
    ok = f0 <= req.lam * req.p
    res.premises.append(Premise(
        "f(s0) <= lam*p", method, ok, f"f(s0) = {f0}, lam*p = {req.lam * req.p}",
    ))
    if not ok:
        res.verdict, res.premise = REJECTED, "initial"
        return res

    # 3. sign premises on B
    params = {k: float(v) for k, v in req.params.items()}
    method = f"grid of {req.grid} points per axis over the box ({GRID_LABEL})"
    if singular:
        method += ", away from the singular set"
    for name, e, sign, premise in (
        ("f >= 0 on B", req.f, "nonneg", "f-nonneg"),
        ("Lf <= 0 on B", lf, "nonpos", "Lf-nonpos"),
    ):
        try:
            sr = check_sign(e, sign, block.domain, req.box, req.grid, params, exclude=singular)
        except EvaluationError as exc:
            res.premises.append(Premise(name, method, False, f"evaluation failed: {exc}"))
            res.verdict, res.reason = UNSUPPORTED, f"cannot evaluate {name}: {exc}"
            return res
        if not sr.passes:
            res.premises.append(Premise(name, method, False, f"value {sr.value!r}", sr.point))
            res.verdict, res.premise = REJECTED, premise
            return res
        res.premises.append(Premise(name, method, True, f"{sr.checked} points in B"))

    # 4. boundedness on the box
    names, cols, idx, sub = _region(TRUE, req.box, req.grid, params, singular)
    values = np.asarray(evaluate_array(req.f, sub), dtype=float) if len(idx) else np.zeros(0)
    bounded = bool(np.all(np.isfinite(values)))
    res.premises.append(Premise(
        "f bounded on the box", method, bounded,
        f"max f = {float(values.max()):.17g}" if bounded and len(values) else "",
    ))
    if not bounded:
        res.verdict, res.premise = REJECTED, "bounded"
        return res
    res.verdict = PARTIAL if singular else CERTIFIED
    return res


def _fmt(vals):
    return "{" + ", ".join(f"{k}={v}" for k, v in vals.items()) + "}"


# ---------------------------------------------------------------------------
# bound propagation


@dataclass(frozen=True)
class HoareBound:
    """``{pre} statement {post}`` together with ``P(predicate) op bound``.

    ``predicate``/``bound`` are None for plain triples (skip, assignment),
    which constrain states but make no probability claim.
    """

    statement: Process
    pre: BoolExpr = TRUE
    post: BoolExpr = TRUE
    predicate: BoolExpr | None = None
    op: str = "<="
    bound: Fraction | None = None
    provenance: tuple = ()

    def __post_init__(self):
        if self.bound is not None:
            b = _fraction(self.bound)
            if not 0 <= b <= 1:
                raise ValueError(f"bound {b} is outside [0, 1]")
            object.__setattr__(self, "bound", b)
        if self.op not in ("<", "<=", ">", ">="):
            raise ValueError(f"unknown relation {self.op!r}")


def skip_triple(a: BoolExpr) -> HoareBound:
    return HoareBound(Skip(), a, a, provenance=("skip",))


def assign_triple(var: str, e: Expr, post: BoolExpr) -> HoareBound:
    return HoareBound(Assign(var, e), substitute(post, var, e), post, provenance=("assign",))


def sde_bound(req: CertificateRequest, result: CertificateResult, pre: BoolExpr = TRUE) -> HoareBound:
    """The probability bound a certified (or partial) result licenses."""
    if result.verdict not in (CERTIFIED, PARTIAL):
        raise CompositionError(f"no bound from a {result.verdict} certificate")
    return HoareBound(
        Sde(req.block), pre, closure(req.block.domain), Cmp(req.f, ">=", Const(req.lam)), "<=", req.p,
        provenance=(f"sde rule ({result.verdict})",),
    )


def combine_pchoice(bp: HoareBound, bq: HoareBound, p) -> HoareBound:
    """``P ⊔_p Q``: the bound is ``p*bp + (1-p)*bq``."""
    p = _fraction(p)
    if not 0 <= p <= 1:
        raise ValueError("choice probability must be in [0, 1]")
    if bp.predicate != bq.predicate or bp.op != bq.op:
        raise CompositionError("branches bound different predicates")
    if bp.bound is None or bq.bound is None:
        raise CompositionError("both branches need a probability bound")
    return HoareBound(
        PChoice(bp.statement, p, bq.statement), And(bp.pre, bq.pre) if bp.pre != bq.pre else bp.pre,
        bp.post if bp.post == bq.post else TRUE, bp.predicate, bp.op, p * bp.bound + (1 - p) * bq.bound,
        provenance=("pchoice", bp.provenance, bq.provenance),
    )


def combine_cond(guard: BoolExpr, bp: HoareBound, b_else: HoareBound) -> HoareBound:
    """``guard -> P`` with ``b_else`` bounding the predicate when the guard fails.

    Without knowing which way the guard goes, the weaker of the two bounds
    holds: the larger for upper bounds, the smaller for lower bounds.
    """
    if bp.predicate != b_else.predicate or bp.op != b_else.op:
        raise CompositionError("branches bound different predicates")
    if bp.bound is None or b_else.bound is None:
        raise CompositionError("both branches need a probability bound")
    upper = bp.op in ("<", "<=")
    bound = max(bp.bound, b_else.bound) if upper else min(bp.bound, b_else.bound)
    return HoareBound(Cond(guard, bp.statement), bp.pre, TRUE, bp.predicate, bp.op, bound,
                      provenance=("cond", bp.provenance, b_else.provenance))


def chain_seq(b1: HoareBound, b2: HoareBound) -> HoareBound:
    """``P; Q``: needs ``post(P)`` to entail ``pre(Q)``; keeps Q's bound."""
    if not entails(b1.post, b2.pre):
        raise CompositionError(f"cannot show {format_bool(b1.post)} entails {format_bool(b2.pre)}")
    return HoareBound(Seq(b1.statement, b2.statement), b1.pre, b2.post, b2.predicate, b2.op, b2.bound,
                      provenance=("seq", b1.provenance, b2.provenance))


def _conjuncts(b: BoolExpr) -> list:
    if isinstance(b, And):
        return _conjuncts(b.left) + _conjuncts(b.right)
    if isinstance(b, BoolConst) and b.value:
        return []
    return [b]


def _bound_form(c):
    """``(var, op, value)`` for ``var op const`` (either orientation)."""
    if not isinstance(c, Cmp):
        return None
    flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "="}
    if isinstance(c.left, Var) and isinstance(c.right, Const):
        return c.left.name, c.op, c.right.value
    if isinstance(c.right, Var) and isinstance(c.left, Const):
        return c.right.name, flip[c.op], c.left.value
    return None


def _implies(a, c) -> bool:
    if a == c:
        return True
    fa, fc = _bound_form(a), _bound_form(c)
    if fa is None or fc is None or fa[0] != fc[0]:
        return False
    _, oa, va = fa
    _, oc, vc = fc
    if oa == "=":
        return {"<": va < vc, "<=": va <= vc, "=": va == vc, ">=": va >= vc, ">": va > vc}[oc]
    if oa in ("<", "<=") and oc in ("<", "<="):
        return va < vc or (va == vc and (oc == "<=" or oa == "<"))
    if oa in (">", ">=") and oc in (">", ">="):
        return va > vc or (va == vc and (oc == ">=" or oa == ">"))
    return False


def entails(a: BoolExpr, b: BoolExpr) -> bool:
    """Conservative syntactic entailment between conjunctions.

    Every conjunct of ``b`` must appear in ``a`` or follow from a single
    conjunct of ``a`` of the form ``x op constant``.
    """
    if isinstance(a, BoolConst) and not a.value:
        return True
    ca = _conjuncts(a)
    return all(any(_implies(x, c) for x in ca) for c in _conjuncts(b))


__all__ = [
    "CertificateRequest", "CertificateResult", "Premise", "SignResult", "RequestError", "CompositionError",
    "check_sign", "check_sde_rule", "HoareBound", "skip_triple", "assign_triple", "sde_bound",
    "combine_pchoice", "combine_cond", "chain_seq", "entails", "diff", "lie_derivative",
    "CERTIFIED", "PARTIAL", "REJECTED", "UNSUPPORTED", "GRID_LABEL",
]

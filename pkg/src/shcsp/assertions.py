"""Assertions over sampled runs and Monte Carlo probability estimates.

Three layers:

* state formulas, evaluated on one :class:`~shcsp.trace.ProcState`;
* run formulas, evaluated on a :class:`~shcsp.execution.RunRecord` by
  reading its flow (``HoldsAt``, bounded quantifiers and their sugar);
* probability formulas ``P(phi) op p``, decided from an :class:`Estimate`.

Only the checkable fragment is supported: value quantifiers range over a
finite list and time quantifiers over the recorded points of the flow.

Reading a flow at time ``T`` takes the last recorded point with time
``<= T``, so at an event time the value after the event is seen.  The time
term ``end`` stands for the last recorded time of the run.
``during`` and ``in`` look only at points where the variables of their
state formula are bound, so ``in(abs(y) >= 1, 0, end)`` ignores the
instants before ``y`` is first assigned.

Text syntax::

    prob    := pand ('or' pand)*
    pand    := pnot (('&' | 'and') pnot)*
    pnot    := 'not' pnot | 'P' '(' formula ')' relop NUM | '(' prob ')'
    formula := fand ('or' fand)*
    fand    := fnot (('&' | 'and') fnot)*
    fnot    := 'not' fnot | 'true' | 'false'
             | 'at' '(' state ',' texpr ')'
             | 'during' '(' state ',' texpr ',' texpr ')'
             | 'in' '(' state ',' texpr ',' texpr ')'
             | 'forall' NAME 'in' '{' NUM (',' NUM)* '}' ':' fnot
             | 'forall' NAME 'in' '[' texpr ',' texpr ']' ':' fnot
             | '(' formula ')'
    state   := sand ('or' sand)*
    sand    := snot (('&' | 'and') snot)*
    snot    := 'not' snot | 'true' | 'false'
             | 'ready' '(' trace ',' NAME ('?' | '!') ')'
             | 'trace' '(' trace '=' trace ')'
             | expr relop expr | '(' state ')'
    trace   := titem ('^' titem)*
    titem   := 'tr' | 'eps' | '<' NAME ',' expr ',' expr '>'
             | '<' 'tau' ',' expr '>' | '(' trace ')' ['*']
    relop   := '<' | '<=' | '=' | '>=' | '>'
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import RunConfig
from .execution import ExecutionError, RunRecord, check_program, run
from .expr import BoolExpr, EvaluationError, Expr, evaluate, evaluate_bool, evaluate_bool_array, free_vars
from .parser import ParseError, Parser
from .syntax import Process
from .trace import Comm, Internal, ProcState, ReadyItem, comm_count


class FragmentError(ValueError):
    """The formula is outside the checkable fragment, or cannot be read."""


class HorizonError(FragmentError):
    pass


class EstimationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class TraceVar:
    """The trace variable ``tr``."""


@dataclass(frozen=True)
class TraceItem:
    chan: str | None  # None for an internal item
    value: Expr | None
    time: Expr


@dataclass(frozen=True)
class TraceLit:
    items: tuple = ()


@dataclass(frozen=True)
class Concat:
    left: object
    right: object


@dataclass(frozen=True)
class Star:
    body: object


EPS = TraceLit(())


def _has_star(h) -> bool:
    if isinstance(h, Star):
        return True
    if isinstance(h, Concat):
        return _has_star(h.left) or _has_star(h.right)
    return False


def eval_term(t, state: ProcState, bind: Mapping[str, float] | None = None):
    """Value of a term: a float for an Expr, a tuple of items for a trace."""
    env = state.env()
    if bind:
        env.update(bind)
    return _eval_term(t, state, env)


def _eval_term(t, state, env):
    if isinstance(t, Expr):
        return evaluate(t, env)
    if isinstance(t, TraceVar):
        return tuple(state.tr)
    if isinstance(t, TraceLit):
        out = []
        for it in t.items:
            time = evaluate(it.time, env)
            if it.chan is None:
                out.append(Internal(time))
            else:
                out.append(Comm(it.chan, evaluate(it.value, env), time))
        return tuple(out)
    if isinstance(t, Concat):
        return _eval_term(t.left, state, env) + _eval_term(t.right, state, env)
    if isinstance(t, Star):
        raise FragmentError("a starred trace can only be matched, not evaluated")
    raise TypeError(f"not a term: {t!r}")


def _match(pattern, trace: tuple, state, env) -> bool:
    """Does ``trace`` match ``pattern`` (which may contain stars)?"""
    return len(trace) in _match_ends(pattern, trace, 0, state, env)


def _match_ends(pattern, trace, i, state, env) -> set[int]:
    if isinstance(pattern, Concat):
        out = set()
        for j in _match_ends(pattern.left, trace, i, state, env):
            out |= _match_ends(pattern.right, trace, j, state, env)
        return out
    if isinstance(pattern, Star):
        seen = {i}
        frontier = [i]
        while frontier:
            j = frontier.pop()
            for k in _match_ends(pattern.body, trace, j, state, env):
                if k not in seen:
                    seen.add(k)
                    frontier.append(k)
        return seen
    concrete = _eval_term(pattern, state, env)
    n = len(concrete)
    return {i + n} if tuple(trace[i:i + n]) == concrete else set()


# ---------------------------------------------------------------------------
# state formulas


@dataclass(frozen=True)
class SBot:
    pass


@dataclass(frozen=True)
class Rel:
    """A relation over value terms (variables, ``now``, bound names)."""

    rel: BoolExpr


@dataclass(frozen=True)
class TraceEq:
    left: object
    right: object  # may contain stars


@dataclass(frozen=True)
class Ready:
    """``h.ch?`` / ``h.ch!``."""

    trace: object
    chan: str
    direction: str


@dataclass(frozen=True)
class SNot:
    arg: object


@dataclass(frozen=True)
class SOr:
    left: object
    right: object


def SAnd(a, b):
    return SNot(SOr(SNot(a), SNot(b)))


STRUE = SNot(SBot())


def eval_state_formula(s, state: ProcState, bind: Mapping[str, float] | None = None) -> bool:
    env = state.env()
    if bind:
        env.update(bind)
    return _eval_state(s, state, env)


def _eval_state(s, state, env) -> bool:
    if isinstance(s, SBot):
        return False
    if isinstance(s, Rel):
        return evaluate_bool(s.rel, env)
    if isinstance(s, SNot):
        return not _eval_state(s.arg, state, env)
    if isinstance(s, SOr):
        return _eval_state(s.left, state, env) or _eval_state(s.right, state, env)
    if isinstance(s, TraceEq):
        left = _eval_term(s.left, state, env)
        return _match(s.right, left, state, env)
    if isinstance(s, Ready):
        h = _eval_term(s.trace, state, env)
        return ReadyItem(s.chan, s.direction, comm_count(h, s.chan)) in state.rdy
    raise TypeError(f"not a state formula: {s!r}")


def _vectorizable(s) -> bool:
    if isinstance(s, (SBot, Rel)):
        return True
    if isinstance(s, SNot):
        return _vectorizable(s.arg)
    if isinstance(s, SOr):
        return _vectorizable(s.left) and _vectorizable(s.right)
    return False


def _term_vars(t) -> set:
    if isinstance(t, Expr):
        return free_vars(t)
    if isinstance(t, TraceLit):
        out = set()
        for it in t.items:
            out |= free_vars(it.time)
            if it.value is not None:
                out |= free_vars(it.value)
        return out
    if isinstance(t, Concat):
        return _term_vars(t.left) | _term_vars(t.right)
    if isinstance(t, Star):
        return _term_vars(t.body)
    return set()


def _state_vars(s) -> set:
    if isinstance(s, Rel):
        return free_vars(s.rel)
    if isinstance(s, SNot):
        return _state_vars(s.arg)
    if isinstance(s, SOr):
        return _state_vars(s.left) | _state_vars(s.right)
    if isinstance(s, TraceEq):
        return _term_vars(s.left) | _term_vars(s.right)
    if isinstance(s, Ready):
        return _term_vars(s.trace)
    return set()


def _eval_state_array(s, env):
    if isinstance(s, SBot):
        return np.asarray(False)
    if isinstance(s, Rel):
        return evaluate_bool_array(s.rel, env)
    if isinstance(s, SNot):
        return np.logical_not(_eval_state_array(s.arg, env))
    return np.logical_or(_eval_state_array(s.left, env), _eval_state_array(s.right, env))


# ---------------------------------------------------------------------------
# run formulas


@dataclass(frozen=True)
class FBot:
    pass


@dataclass(frozen=True)
class HoldsAt:
    state: object
    time: Expr


@dataclass(frozen=True)
class HoldsDuring:
    """``state`` holds at every recorded point with time in ``[lo, hi]``
    at which its variables are bound."""

    state: object
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class HoldsIn:
    """``state`` holds at some recorded point with time in ``[lo, hi]``
    at which its variables are bound."""

    state: object
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class FNot:
    arg: object


@dataclass(frozen=True)
class FOr:
    left: object
    right: object


@dataclass(frozen=True)
class ForallValue:
    var: str
    values: tuple
    body: object


@dataclass(frozen=True)
class ForallTime:
    """``forall var in [lo, hi]``, over the distinct recorded times."""

    var: str
    lo: Expr
    hi: Expr
    body: object


def FAnd(a, b):
    return FNot(FOr(FNot(a), FNot(b)))


FTRUE = FNot(FBot())


def eval_formula(phi, rec: RunRecord, bind: Mapping[str, float] | None = None) -> bool:
    flow = rec.flow
    if flow is None or len(flow) == 0:
        raise FragmentError("run record carries no flow")
    env = {"end": float(flow.times[-1])}
    if bind:
        env.update(bind)
    return _eval_formula(phi, flow, env)


def _time(e: Expr, env) -> float:
    try:
        return evaluate(e, env)
    except EvaluationError as exc:
        raise FragmentError(f"cannot evaluate time term: {exc}") from None


def _interval(flow, lo, hi):
    """Index range of recorded points with time in [lo, hi], clipped to the run."""
    i = int(np.searchsorted(flow.times, lo, side="left"))
    j = int(np.searchsorted(flow.times, hi, side="right"))
    return i, j


def _eval_formula(phi, flow, env) -> bool:
    if isinstance(phi, FBot):
        return False
    if isinstance(phi, FNot):
        return not _eval_formula(phi.arg, flow, env)
    if isinstance(phi, FOr):
        return _eval_formula(phi.left, flow, env) or _eval_formula(phi.right, flow, env)
    if isinstance(phi, HoldsAt):
        t = _time(phi.time, env)
        end = float(flow.times[-1])
        if t > end or t < flow.times[0]:
            raise HorizonError(f"time {t!r} is outside the run [{float(flow.times[0])!r}, {end!r}]")
        state = flow.snapshot(flow.index_at(t))
        return _eval_state(phi.state, state, _state_env(state, env))
    if isinstance(phi, (HoldsDuring, HoldsIn)):
        lo, hi = _time(phi.lo, env), _time(phi.hi, env)
        i, j = _interval(flow, lo, hi)
        if i >= j:
            return isinstance(phi, HoldsDuring)
        truth = _points(phi.state, flow, i, j, env)
        return bool(truth.all()) if isinstance(phi, HoldsDuring) else bool(truth.any())
    if isinstance(phi, ForallValue):
        for v in phi.values:
            if not _eval_formula(phi.body, flow, {**env, phi.var: float(v)}):
                return False
        return True
    if isinstance(phi, ForallTime):
        lo, hi = _time(phi.lo, env), _time(phi.hi, env)
        i, j = _interval(flow, lo, hi)
        for t in np.unique(flow.times[i:j]):
            if not _eval_formula(phi.body, flow, {**env, phi.var: float(t)}):
                return False
        return True
    raise TypeError(f"not a formula: {phi!r}")


def _state_env(state, bind):
    env = state.env()
    env.update(bind)
    return env


def _points(s, flow, i, j, bind) -> np.ndarray:
    """Truth of ``s`` at the recorded points ``i..j-1`` where every variable
    of ``s`` is bound (points before a variable's first assignment are
    skipped).  A variable the run never binds is an error."""
    bound = np.ones(j - i, dtype=bool)
    cols = {}
    for name in _state_vars(s):
        if name in bind or name == "now":
            continue
        if name not in flow.index:
            raise EvaluationError(f"unbound variable {name!r}")
        col = flow.column(name)[i:j]
        bound &= ~np.isnan(col)
        cols[name] = col
    keep = np.flatnonzero(bound)
    if _vectorizable(s):
        env = dict(bind)
        env["now"] = flow.times[i:j][keep]
        env.update({name: col[keep] for name, col in cols.items()})
        return np.broadcast_to(_eval_state_array(s, env), (len(keep),))
    out = np.empty(len(keep), dtype=bool)
    for n, k in enumerate(keep):
        state = flow.snapshot(i + int(k))
        out[n] = _eval_state(s, state, _state_env(state, bind))
    return out


# ---------------------------------------------------------------------------
# probability formulas and estimation

RELOPS = ("<", "<=", ">=", ">")


@dataclass(frozen=True)
class Prob:
    formula: object
    op: str
    bound: float

    def __post_init__(self):
        if self.op not in RELOPS:
            raise FragmentError(f"unknown relation {self.op!r}")
        if not 0 <= self.bound <= 1:
            raise FragmentError(f"probability bound {self.bound!r} is outside [0, 1]")


@dataclass(frozen=True)
class PNot:
    arg: object


@dataclass(frozen=True)
class POr:
    left: object
    right: object


def PAnd(a, b):
    return PNot(POr(PNot(a), PNot(b)))


HOLDS, FAILS, INCONCLUSIVE = "holds", "fails", "inconclusive"


@dataclass
class Estimate:
    phat: float
    n: int
    lo: float
    hi: float
    verdict: str | None = None
    failures: int = 0
    delta: float = 0.01

    def to_json(self) -> dict:
        return {"phat": self.phat, "n": self.n, "lo": self.lo, "hi": self.hi, "verdict": self.verdict}


def hoeffding_band(n: int, delta: float) -> float:
    return math.sqrt(math.log(2 / delta) / (2 * n))


def decide(op: str, bound: float, lo: float, hi: float) -> str:
    """Verdict for ``P op bound`` given a confidence interval ``[lo, hi]``."""
    if op == "<=":
        return HOLDS if hi <= bound else FAILS if lo > bound else INCONCLUSIVE
    if op == "<":
        return HOLDS if hi < bound else FAILS if lo >= bound else INCONCLUSIVE
    if op == ">=":
        return HOLDS if lo >= bound else FAILS if hi < bound else INCONCLUSIVE
    if op == ">":
        return HOLDS if lo > bound else FAILS if hi <= bound else INCONCLUSIVE
    raise FragmentError(f"unknown relation {op!r}")


def run_independent(phi) -> bool | None:
    """Truth value of ``phi`` when it cannot depend on the run, else None."""
    if isinstance(phi, FBot):
        return False
    if isinstance(phi, FNot):
        v = run_independent(phi.arg)
        return None if v is None else not v
    if isinstance(phi, FOr):
        a, b = run_independent(phi.left), run_independent(phi.right)
        if a or b:
            return True
        return False if a is False and b is False else None
    return None


def _count(args) -> tuple[int, int]:
    phi, program, init, seed, cfg, start, stop = args
    hits = failures = 0
    for i in range(start, stop):
        try:
            rec = run(program, init, seed, cfg, stream=(i,), checked=True)
            hits += eval_formula(phi, rec)
        except (ExecutionError, EvaluationError):
            failures += 1
    return hits, failures


def estimate_prob(phi, program: Process, init: Mapping[str, float] | None, n: int, delta: float = 0.01,
                  cfg: RunConfig | None = None, seed: int = 0, relation: tuple[str, float] | None = None,
                  workers: int = 1) -> Estimate:
    """Monte Carlo estimate of ``P(phi)`` over ``n`` runs.

    Run ``i`` uses the substream ``(i,)`` of ``seed``, so the result does not
    depend on ``workers``.  Failed runs are excluded from ``n`` and reported
    in ``failures``; more than 1% failures is an error.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    check_program(program)
    cfg = cfg or RunConfig()
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers > 1 and n >= 2 * workers:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        jobs = [(phi, program, init, seed, cfg, int(a), int(b)) for a, b in zip(bounds, bounds[1:])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count, jobs))
    else:
        parts = [_count((phi, program, init, seed, cfg, 0, n))]
    hits = sum(h for h, _ in parts)
    failures = sum(f for _, f in parts)
    if failures > 0.01 * n:
        raise EstimationError(f"{failures} of {n} runs failed")
    ok = n - failures
    if ok == 0:
        raise EstimationError("no successful runs")
    phat = hits / ok
    # a run-independent formula has a known probability, no sampling error
    band = 0.0 if run_independent(phi) is not None else hoeffding_band(ok, delta)
    lo, hi = max(0.0, phat - band), min(1.0, phat + band)
    verdict = decide(*relation, lo, hi) if relation is not None else None
    return Estimate(phat, ok, lo, hi, verdict, failures, delta)


def check_prob(pf, program, init, n, delta=0.01, cfg=None, seed=0, workers=1):
    """Decide a probability formula.  Returns ``(verdict, estimates)``.

    Connectives combine verdicts three-valued: an inconclusive part makes
    the whole inconclusive unless the other part already settles it.
    """
    estimates = []

    def go(f):
        if isinstance(f, Prob):
            est = estimate_prob(f.formula, program, init, n, delta, cfg, seed, (f.op, f.bound), workers)
            estimates.append(est)
            return est.verdict
        if isinstance(f, PNot):
            v = go(f.arg)
            return {HOLDS: FAILS, FAILS: HOLDS}.get(v, INCONCLUSIVE)
        if isinstance(f, POr):
            a, b = go(f.left), go(f.right)
            if HOLDS in (a, b):
                return HOLDS
            if a == b == FAILS:
                return FAILS
            return INCONCLUSIVE
        raise TypeError(f"not a probability formula: {f!r}")

    return go(pf), estimates


# ---------------------------------------------------------------------------
# text syntax


class _FormulaParser(Parser):
    def prob(self):
        left = self.pand()
        while self.accept("or"):
            left = POr(left, self.pand())
        return left

    def pand(self):
        left = self.pnot()
        while self.at("&") or self.at("and"):
            self.i += 1
            left = PAnd(left, self.pnot())
        return left

    def pnot(self):
        if self.accept("not"):
            return PNot(self.pnot())
        if self.accept("P"):
            self.expect("(")
            phi = self.formula()
            self.expect(")")
            op = self.tok.text
            if op not in RELOPS:
                self.fail(f"expected one of {', '.join(RELOPS)}, found {self.describe(self.tok)}")
            self.i += 1
            bound = self._number()
            try:
                return Prob(phi, op, bound)
            except FragmentError as exc:
                self.fail(str(exc))
        self.expect("(")
        inner = self.prob()
        self.expect(")")
        return inner

    def _number(self) -> float:
        t = self.tok
        if t.kind != "NUM":
            self.fail(f"expected a number, found {self.describe(t)}")
        self.i += 1
        return float(t.text)

    def formula(self):
        left = self.fand()
        while self.accept("or"):
            left = FOr(left, self.fand())
        return left

    def fand(self):
        left = self.fnot()
        while self.at("&") or self.at("and"):
            self.i += 1
            left = FAnd(left, self.fnot())
        return left

    def fnot(self):
        if self.accept("not"):
            return FNot(self.fnot())
        if self.accept("true"):
            return FTRUE
        if self.accept("false"):
            return FBot()
        if self.accept("at"):
            self.expect("(")
            s = self.state()
            self.expect(",")
            t = self.expr()
            self.expect(")")
            return HoldsAt(s, t)
        for word, cls in (("during", HoldsDuring), ("in", HoldsIn)):
            if self.accept(word):
                self.expect("(")
                s = self.state()
                self.expect(",")
                lo = self.expr()
                self.expect(",")
                hi = self.expr()
                self.expect(")")
                return cls(s, lo, hi)
        if self.accept("forall"):
            var = self.expect_name().text
            self.expect("in")
            if self.accept("{"):
                values = [self._signed()]
                while self.accept(","):
                    values.append(self._signed())
                self.expect("}")
                self.expect(":")
                return ForallValue(var, tuple(values), self.fnot())
            self.expect("[")
            lo = self.expr()
            self.expect(",")
            hi = self.expr()
            self.expect("]")
            self.expect(":")
            return ForallTime(var, lo, hi, self.fnot())
        self.expect("(")
        inner = self.formula()
        self.expect(")")
        return inner

    def _signed(self) -> float:
        neg = self.accept("-")
        v = self._number()
        return -v if neg else v

    def state(self):
        left = self.sand()
        while self.accept("or"):
            left = SOr(left, self.sand())
        return left

    def sand(self):
        left = self.snot()
        while self.at("&") or self.at("and"):
            self.i += 1
            left = SAnd(left, self.snot())
        return left

    def snot(self):
        if self.accept("not"):
            return SNot(self.snot())
        if self.accept("true"):
            return STRUE
        if self.accept("false"):
            return SBot()
        if self.at("ready") and self.peek().text == "(":
            self.i += 2
            h = self.trace()
            self.expect(",")
            chan = self.expect_name().text
            t = self.tok
            if t.text not in ("?", "!"):
                self.fail(f"expected '?' or '!', found {self.describe(t)}")
            self.i += 1
            self.expect(")")
            return Ready(h, chan, t.text)
        if self.at("trace") and self.peek().text == "(":
            self.i += 2
            left = self.trace()
            self.expect("=")
            right = self.trace()
            self.expect(")")
            if _has_star(left):
                self.fail("a starred trace is only allowed on the right of '='")
            return TraceEq(left, right)
        cmp = self.attempt(self._comparison)
        if cmp is not None:
            return Rel(cmp)
        self.expect("(")
        inner = self.state()
        self.expect(")")
        return inner

    def trace(self):
        left = self.titem()
        while self.accept("^"):
            left = Concat(left, self.titem())
        return left

    def titem(self):
        if self.accept("tr"):
            return TraceVar()
        if self.accept("eps"):
            return EPS
        if self.accept("<"):
            if self.accept("tau"):
                self.expect(",")
                t = self.expr()
                self.expect(">")
                return TraceLit((TraceItem(None, None, t),))
            chan = self.expect_name().text
            self.expect(",")
            v = self.expr()
            self.expect(",")
            t = self.expr()
            self.expect(">")
            return TraceLit((TraceItem(chan, v, t),))
        self.expect("(")
        inner = self.trace()
        self.expect(")")
        if self.accept("*"):
            return Star(inner)
        return inner


def _parse(text: str, method: str):
    p = _FormulaParser(text)
    out = getattr(p, method)()
    if p.tok.kind != "EOF":
        p.fail(f"unexpected {p.describe(p.tok)}")
    return out


def parse_formula(text: str):
    """Parse a run formula."""
    return _parse(text, "formula")


def parse_state(text: str):
    return _parse(text, "state")


def parse_prob(text: str):
    """Parse a probability formula such as ``P(during(y < 1, 0, end)) >= 0.9``."""
    return _parse(text, "prob")


__all__ = [
    "eval_term", "eval_state_formula", "eval_formula", "estimate_prob", "check_prob", "decide",
    "hoeffding_band", "run_independent", "parse_formula", "parse_state", "parse_prob", "Estimate", "FragmentError",
    "HorizonError", "EstimationError", "ParseError",
    "TraceVar", "TraceItem", "TraceLit", "Concat", "Star", "EPS",
    "SBot", "Rel", "TraceEq", "Ready", "SNot", "SOr", "SAnd", "STRUE",
    "FBot", "HoldsAt", "HoldsDuring", "HoldsIn", "FNot", "FOr", "FAnd", "FTRUE", "ForallValue", "ForallTime",
    "Prob", "PNot", "POr", "PAnd", "HOLDS", "FAILS", "INCONCLUSIVE",
]

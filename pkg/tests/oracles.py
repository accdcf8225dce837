"""Independent reference implementations used by the tests.

These are deliberately naive: generate-and-filter rather than the
constructive algorithms of the package.
"""
from __future__ import annotations

import random
from fractions import Fraction

from shcsp.expr import Add, Call, Const, Div, Mul, Sub, Var, evaluate
from shcsp.symbolic import diff
from shcsp.trace import Comm


def sorted_traces(alphabet, max_len):
    out = [()]
    frontier = [()]
    for _ in range(max_len):
        nxt = []
        for t in frontier:
            for it in alphabet:
                if not t or t[-1].time <= it.time:
                    nxt.append(t + (it,))
        out += nxt
        frontier = nxt
    return out


def _shuffles(t1, t2):
    """Every way of reading t1 and t2 left to right, one head at a time or
    both heads together when they are equal.  Side tags are kept."""
    if not t1 and not t2:
        yield ()
        return
    if t1:
        for rest in _shuffles(t1[1:], t2):
            yield ((1, t1[0]),) + rest
    if t2:
        for rest in _shuffles(t1, t2[1:]):
            yield ((2, t2[0]),) + rest
    if t1 and t2 and t1[0] == t2[0]:
        for rest in _shuffles(t1[1:], t2[1:]):
            yield ((3, t1[0]),) + rest


def merge_oracle(t1, t2, sync):
    c1 = {it.chan for it in t1 if isinstance(it, Comm)}
    c2 = {it.chan for it in t2 if isinstance(it, Comm)}
    x = set(sync) | (c1 & c2)

    def proj(tagged, side, chans):
        out = []
        for tag, it in tagged:
            if isinstance(it, Comm):
                if it.chan in chans:
                    out.append(it)
            elif tag == side or (tag == 3 and side in (1, 2)):
                out.append(it)
        return tuple(out)

    res = set()
    for cand in _shuffles(t1, t2):
        items = [it for _, it in cand]
        if any(a.time > b.time for a, b in zip(items, items[1:])):
            continue
        if any(tag == 3 and not isinstance(it, Comm) for tag, it in cand):
            continue  # internal steps of different sides are distinct events
        if proj(cand, 1, c1) != t1 or proj(cand, 2, c2) != t2:
            continue
        xs = tuple(it for it in items if isinstance(it, Comm) and it.chan in x)
        if xs != tuple(it for it in t1 if isinstance(it, Comm) and it.chan in x):
            continue
        if xs != tuple(it for it in t2 if isinstance(it, Comm) and it.chan in x):
            continue
        res.add(tuple(items))
    return res


def random_smooth(rng: random.Random, depth: int):
    names = ("x", "y", "z")
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return Var(rng.choice(names))
        return Const(Fraction(rng.randint(-5, 5), rng.randint(1, 4)))
    k = rng.randrange(8)
    a = random_smooth(rng, depth - 1)
    if k == 0:
        return Add(a, random_smooth(rng, depth - 1))
    if k == 1:
        return Sub(a, random_smooth(rng, depth - 1))
    if k in (2, 3):
        return Mul(a, random_smooth(rng, depth - 1))
    if k == 4:
        b = random_smooth(rng, depth - 1)
        return Div(a, Add(Const(2), Mul(b, b)))  # denominator >= 2
    if k == 5:
        return Call("sin", (a,))
    if k == 6:
        return Call("cos", (a,))
    return Call("exp", (Call("sin", (a,)),))  # bounded growth


def check_partials(count=100, seed=8, h=1e-5, tol=1e-6):
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(count):
        e = random_smooth(rng, 4)
        pt = {n: rng.uniform(-1, 1) for n in ("x", "y", "z")}
        for v in ("x", "y", "z"):
            sym = evaluate(diff(e, v), pt)
            hi, lo = dict(pt), dict(pt)
            hi[v] += h
            lo[v] -= h
            num = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
            worst = max(worst, abs(sym - num) / (1 + abs(sym)))
    return worst <= tol, worst

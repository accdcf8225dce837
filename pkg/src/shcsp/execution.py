"""Sampled execution of SHCSP systems.

A configuration is a tree: ``Parallel`` nodes at the top, sequential
components at the leaves.  Each component owns a continuation stack, a local
trace, its readiness offers and, while it runs an SDE block, an
:class:`~shcsp.sde.Integrator`.  Process variables live in one valuation
(components never share variables); ``tr`` and ``rdy`` are global.

Scheduling within one model-time instant:

1. local moves (skip, assignment, conditional, probabilistic choice,
   repetition exit, readiness registration, continuous exit, parallel
   termination).  With several enabled, one is picked uniformly from the
   scheduler stream.
2. otherwise a synchronization between a ready input and a ready output on
   the same channel with the same number of prior communications.  An
   interrupt with several branches ready picks one by weight, with a draw
   from its own stream; other ties are broken uniformly by the scheduler.
3. otherwise time passes: every running block advances until the earliest
   boundary exit, the next grid point of an interrupt whose partner is
   waiting, or ``t_max``.

Local moves go first so that every offer that becomes ready at an instant is
registered before any synchronization at that instant is chosen; this is
what makes "simultaneously ready" interrupt branches observable.

Randomness: component ``path`` draws from ``stream(seed, key + path)`` and
the scheduler from ``stream(seed, key + (SCHEDULER,))``.  A component's draws
depend only on its own behaviour, so components that do not communicate do
not influence each other's samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import rng as rngmod
from .config import RunConfig
from .expr import EvaluationError, evaluate, evaluate_bool
from .sde import BOUNDARY, Integrator, IntegrationError
from .syntax import (
    INPUT, OUTPUT, Assign, Cond, Input, Interrupt, Output, Parallel, PChoice, Process, Repeat,
    Sde, Seq, Skip, Stop, channel_uses, channels, validate, variables,
)
from .trace import Comm, Internal, ProcState, ReadyItem

TERMINATED = "terminated"
TIMEOUT = "timeout"
DEADLOCK = "deadlock"
STEP_LIMIT = "step-limit"
EXITS = (TERMINATED, TIMEOUT, DEADLOCK, STEP_LIMIT)


class ExecutionError(RuntimeError):
    """A run failed: evaluation error, integration failure, invalid program."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (at t={time!r})")
        self.time = time


@dataclass(frozen=True)
class Loop(Process):
    """Runtime form of ``body*``: ``remaining`` further iterations, or
    ``None`` when the count is drawn geometrically."""

    body: Process
    remaining: int | None
    pos: tuple | None = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Label:
    kind: str  # "tau", "comm" or "delay"
    rule: str
    chan: str | None = None
    value: float | None = None
    delay: float | None = None

    def __str__(self):
        if self.kind == "comm":
            return f"{self.chan}.{self.value!r}"
        if self.kind == "delay":
            return f"{self.delay!r}"
        return "tau"


# ---------------------------------------------------------------------------
# rule helpers


def pchoice_branch(p, u: float) -> str:
    """``"left"`` iff ``u <= p`` (compared exactly)."""
    return "left" if Fraction(u) <= Fraction(p) else "right"


def weighted_pick(weights: Sequence, u: float) -> int:
    """0-based index ``j`` with ``S_{j-1}/S <= u < S_j/S`` (partial sums ``S``)."""
    if not weights:
        raise ValueError("weighted_pick needs at least one weight")
    ws = [Fraction(w) for w in weights]
    if any(w <= 0 for w in ws):
        raise ValueError("weights must be positive")
    total = sum(ws)
    uq = Fraction(u)
    acc = Fraction(0)
    for j, w in enumerate(ws):
        acc += w
        if uq < acc / total:
            return j
    return len(ws) - 1


# ---------------------------------------------------------------------------
# configuration tree


class Component:
    __slots__ = (
        "path", "stack", "rng", "tr", "counts", "offers", "registered", "integ", "at_boundary",
        "at_grid", "vars",
    )

    def __init__(self, process: Process, path: tuple, rng):
        self.path = path
        self.stack = [process]
        self.rng = rng
        self.tr: list = []
        self.counts: dict[str, int] = {}
        self.offers: list = []  # (ReadyItem, branch index or None)
        self.registered = False
        self.integ: Integrator | None = None
        self.at_boundary = False
        self.at_grid = False
        self.vars = variables(process)

    @property
    def head(self):
        return self.stack[-1] if self.stack else None

    @property
    def finished(self) -> bool:
        return not self.stack

    def term(self) -> Process:
        if not self.stack:
            return Stop()
        out = self.stack[0]
        for p in self.stack[1:]:
            out = Seq(p, out)
        return out


class ParNode:
    __slots__ = ("path", "left", "right", "sync", "finished")

    def __init__(self, left, right, path, sync):
        self.path = path
        self.left = left
        self.right = right
        self.sync = sync
        self.finished = False

    def term(self) -> Process:
        if self.finished:
            return Stop()
        return Parallel(self.left.term(), self.right.term())


def _leaves(node):
    if isinstance(node, Component):
        yield node
    else:
        yield from _leaves(node.left)
        yield from _leaves(node.right)


def _par_nodes(node):
    if isinstance(node, ParNode):
        yield from _par_nodes(node.left)
        yield from _par_nodes(node.right)
        yield node


def _finished(node) -> bool:
    return node.finished


# ---------------------------------------------------------------------------
# flows


class Flow:
    """Time-indexed samples of a run.

    Stored column-wise: ``times``, a ``values`` matrix over ``names`` (NaN
    while a variable is unbound), the trace length and the ready set at each
    point.  A discrete step appends its post-state at the same time as the
    pre-state, so values read at an event time are the right limits.
    """

    def __init__(self, names, times, values, tr_len, rdy, trace):
        self.names = tuple(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.times = times
        self.values = values
        self.tr_len = tr_len
        self.rdy = rdy
        self.trace = tuple(trace)

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index[name]]

    def snapshot(self, i: int) -> ProcState:
        row = self.values[i]
        vals = {n: float(row[j]) for j, n in enumerate(self.names) if not math.isnan(row[j])}
        return ProcState(vals, float(self.times[i]), self.trace[: int(self.tr_len[i])], self.rdy[i])

    def __iter__(self):
        for i in range(len(self)):
            yield float(self.times[i]), self.snapshot(i)

    def index_at(self, t: float) -> int:
        """Last point with time <= t (the right-continuous reading)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"time {t!r} precedes the flow")
        return i

    def to_csv(self) -> str:
        lines = ["time," + ",".join(self.names)]
        for i in range(len(self)):
            cells = [f"{float(self.times[i]):.17g}"]
            cells += ["" if math.isnan(x) else f"{x:.17g}" for x in self.values[i]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


class _FlowRecorder:
    def __init__(self, names):
        self.names = tuple(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.times: list = []
        self.values: list = []
        self.tr_len: list = []
        self.rdy: list = []

    def row(self, vals) -> np.ndarray:
        row = np.full(len(self.names), np.nan)
        for n, v in vals.items():
            j = self.index.get(n)
            if j is not None:
                row[j] = v
        return row

    def point(self, t, vals, tr_len, rdy):
        self.times.append(np.array([t]))
        self.values.append(self.row(vals)[None, :])
        self.tr_len.append(np.array([tr_len]))
        self.rdy.append([rdy])

    def block(self, times, values, tr_len, rdy):
        self.times.append(times)
        self.values.append(values)
        self.tr_len.append(np.full(len(times), tr_len))
        self.rdy.append([rdy] * len(times))

    def finish(self, trace) -> Flow:
        if self.times:
            times = np.concatenate(self.times)
            values = np.concatenate(self.values)
            tr_len = np.concatenate(self.tr_len).astype(np.int64)
        else:
            times = np.empty(0)
            values = np.empty((0, len(self.names)))
            tr_len = np.empty(0, dtype=np.int64)
        rdy = [r for chunk in self.rdy for r in chunk]
        return Flow(self.names, times, values, tr_len, rdy, trace)


# ---------------------------------------------------------------------------
# the machine


@dataclass
class RunRecord:
    seed: int
    final: ProcState
    flow: Flow | None
    trace: tuple
    exit: str
    run: int | None = None
    component_traces: dict = field(default_factory=dict)
    steps: int = 0

    def to_json(self) -> dict:
        from .trace import item_to_json

        return {
            "seed": self.seed,
            "run": self.run,
            "exit": self.exit,
            "final": {
                "vals": {k: self.final.vals[k] for k in sorted(self.final.vals)},
                "now": self.final.now,
                "rdy": sorted([r.chan, r.direction, r.count] for r in self.final.rdy),
            },
            "trace": [item_to_json(it) for it in self.trace],
            "steps": self.steps,
        }


class Machine:
    """Small-step interpreter for one sampled run."""

    def __init__(self, process: Process, init, seed: int, cfg: RunConfig | None = None,
                 stream: tuple = (), backend: str | None = None, record_flow: bool = True):
        self.cfg = cfg or RunConfig()
        self.seed = rngmod.check_seed(seed)
        self.key = tuple(stream)
        self.backend = backend
        if isinstance(init, ProcState):
            self.vals = {k: float(v) for k, v in init.vals.items()}
            self.now = float(init.now)
            self.tr = list(init.tr)
            self._initial_rdy = set(init.rdy)
        else:
            self.vals = {k: float(v) for k, v in dict(init or {}).items()}
            self.now = 0.0
            self.tr = []
            self._initial_rdy = set()
        self.sched = rngmod.stream(self.seed, self.key + (rngmod.SCHEDULER,))
        uses = channel_uses(process)
        # ends with no partner anywhere in the system wait for the environment
        self.open_ends = {(ch, d) for ch, d in uses if (ch, OUTPUT if d == INPUT else INPUT) not in uses}
        self.root = self._build(process, ())
        self.components = list(_leaves(self.root))
        self.par_nodes = list(_par_nodes(self.root))
        self.rdy: set = set()
        names = set(self.vals)
        for c in self.components:
            names |= c.vars
        self.recorder = _FlowRecorder(sorted(names)) if record_flow else None
        self.instant_steps = 0
        self.steps = 0
        self.exit: str | None = None
        for c in self.components:
            self._normalize(c)
        self._record_point()

    def _build(self, p: Process, path: tuple):
        if isinstance(p, Parallel):
            sync = frozenset(channels(p.left) & channels(p.right))
            return ParNode(self._build(p.left, path + (0,)), self._build(p.right, path + (1,)), path, sync)
        return Component(p, path, rngmod.stream(self.seed, self.key + path))

    # -- state views ---------------------------------------------------------
    def env(self) -> dict:
        env = dict(self.vals)
        env.setdefault("now", self.now)
        return env

    def state(self) -> ProcState:
        return ProcState(self.vals, self.now, tuple(self.tr), frozenset(self.rdy))

    def process(self) -> Process:
        return self.root.term()

    def _record_point(self):
        if self.recorder is not None:
            self.recorder.point(self.now, self.vals, len(self.tr), frozenset(self.rdy))

    # -- normalization -------------------------------------------------------
    def _normalize(self, c: Component):
        """Unfold sequencing and loops until a head that takes a rule."""
        unfolds = 0
        while c.stack:
            top = c.stack[-1]
            if isinstance(top, Seq):
                c.stack.pop()
                c.stack.append(top.second)
                c.stack.append(top.first)
            elif isinstance(top, Stop):
                c.stack.pop()
            elif isinstance(top, Repeat):
                pol = self.cfg.repeat
                c.stack[-1] = Loop(top.body, pol.n if pol.kind == "fixed" else None)
            elif isinstance(top, Loop) and top.remaining != 0:
                if top.remaining is None:
                    u = rngmod.uniform(c.rng)
                    if not u < self.cfg.repeat.q:
                        c.stack[-1] = Loop(top.body, 0)
                        continue
                    again = top
                else:
                    again = Loop(top.body, top.remaining - 1)
                c.stack[-1] = again
                c.stack.append(top.body)
                unfolds += 1
                if unfolds > self.cfg.max_instant_steps:
                    self.exit = STEP_LIMIT
                    return
            else:
                break
        head = c.head
        if isinstance(head, (Input, Output)) and not c.registered:
            item = ReadyItem(head.chan, INPUT if isinstance(head, Input) else OUTPUT, c.counts.get(head.chan, 0))
            if item in self._initial_rdy:
                self._initial_rdy.discard(item)
                self._add_offer(c, item, None)
                c.registered = True
        if isinstance(head, (Sde, Interrupt)) and c.integ is None and not c.at_boundary:
            try:
                c.integ = Integrator(head.block, self.vals, self.now, c.rng, self.cfg, backend=self.backend)
            except (EvaluationError, IntegrationError) as exc:
                raise ExecutionError(str(exc), self.now) from None
            c.at_grid = True
            if c.integ.exit is not None and c.integ.exit[0] == BOUNDARY:
                c.at_boundary = True
                c.integ = None
            elif isinstance(head, Interrupt):
                for i, br in enumerate(head.branches):
                    ev = br.event
                    self._add_offer(c, ReadyItem(ev.chan, ev.direction, c.counts.get(ev.chan, 0)), i)

    def _add_offer(self, c, item, branch):
        c.offers.append((item, branch))
        self.rdy.add(item)

    def _clear_offers(self, c):
        for item, _ in c.offers:
            self.rdy.discard(item)
        c.offers.clear()
        c.registered = False

    # -- moves -----------------------------------------------------------------
    def _local_moves(self) -> list:
        moves = []
        for c in self.components:
            head = c.head
            if head is None:
                continue
            if isinstance(head, (Input, Output)):
                if not c.registered:
                    moves.append((c, "In-1" if isinstance(head, Input) else "Out-1"))
            elif isinstance(head, (Sde, Interrupt)):
                if c.at_boundary:
                    moves.append((c, "Cont-2" if isinstance(head, Sde) else "IntP-3"))
            elif isinstance(head, Loop):
                moves.append((c, "Rep-3"))
            else:
                moves.append((c, None))
        for node in self.par_nodes:
            if not node.finished and _finished(node.left) and _finished(node.right):
                moves.append((node, "Par-4"))
        return moves

    def _tau(self, c):
        item = Internal(self.now)
        self.tr.append(item)
        if c is not None:
            c.tr.append(item)

    def _do_local(self, c, rule) -> Label:
        if rule == "Par-4":
            c.finished = True
            self._tau(None)
            return Label("tau", rule)
        head = c.head
        if rule in ("In-1", "Out-1"):
            direction = INPUT if rule == "In-1" else OUTPUT
            self._add_offer(c, ReadyItem(head.chan, direction, c.counts.get(head.chan, 0)), None)
            c.registered = True
            return Label("tau", rule)
        if rule in ("Cont-2", "IntP-3"):
            c.stack.pop()
            c.at_boundary = False
            c.integ = None
            self._clear_offers(c)
            self._tau(c)
            self._normalize(c)
            return Label("tau", rule)
        if rule == "Rep-3":
            c.stack.pop()
            self._tau(c)
            self._normalize(c)
            return Label("tau", rule)
        env = self.env()
        if isinstance(head, Skip):
            c.stack.pop()
            rule = "Skip"
        elif isinstance(head, Assign):
            self.vals[head.var] = evaluate(head.expr, env)
            c.stack.pop()
            rule = "Assign"
        elif isinstance(head, Cond):
            if evaluate_bool(head.guard, env):
                c.stack[-1] = head.body
                rule = "Cond-1"
            else:
                c.stack.pop()
                rule = "Cond-2"
        elif isinstance(head, PChoice):
            u = rngmod.uniform(c.rng)
            if pchoice_branch(head.prob, u) == "left":
                c.stack[-1] = head.left
                rule = "PCho-1"
            else:
                c.stack[-1] = head.right
                rule = "PCho-2"
        else:
            raise ExecutionError(f"no rule for {type(head).__name__}", self.now)
        self._tau(c)
        self._normalize(c)
        return Label("tau", rule)

    def _offers(self):
        """Available offers: (item, component, branch, is_interrupt, available)."""
        out = []
        for c in self.components:
            head = c.head
            if isinstance(head, (Input, Output)) and c.registered:
                for item, br in c.offers:
                    out.append((item, c, br, False, True))
            elif isinstance(head, Interrupt) and c.integ is not None and not c.at_boundary:
                for item, br in c.offers:
                    out.append((item, c, br, True, c.at_grid))
        return out

    def _pairs(self):
        offers = self._offers()
        outputs = {}
        for o in offers:
            if o[0].direction == OUTPUT:
                outputs.setdefault((o[0].chan, o[0].count), []).append(o)
        pairs = []
        for o in offers:
            if o[0].direction != INPUT:
                continue
            for p in outputs.get((o[0].chan, o[0].count), []):
                if p[1] is o[1]:
                    continue
                both_int = o[3] and p[3]
                enabled = (o[4] or p[4]) if both_int else (o[4] and p[4])
                pairs.append((o, p, enabled))
        return pairs

    def _sync(self, inp, out) -> Label:
        _, ci, bi, _, _ = inp
        _, co, bo, _, _ = out
        env = self.env()
        if bo is None:
            expr = co.head.expr
        else:
            expr = co.head.branches[bo].event.payload
        value = evaluate(expr, env)
        chan = inp[0].chan
        if bi is None:
            var = ci.head.var
        else:
            var = ci.head.branches[bi].event.payload
        rules = []
        for c, br, role in ((ci, bi, "In-3"), (co, bo, "Out-3")):
            head = c.head
            self._clear_offers(c)
            if br is None:
                c.stack.pop()
                rules.append(role)
            else:
                c.stack[-1] = head.branches[br].body
                c.integ = None
                c.at_boundary = False
                rules.append("IntP-2")
        self.vals[var] = value
        item = Comm(chan, value, self.now)
        self.tr.append(item)
        for c in (ci, co):
            c.tr.append(item)
            c.counts[chan] = c.counts.get(chan, 0) + 1
        self._normalize(ci)
        self._normalize(co)
        return Label("comm", "Par-1:" + "/".join(rules), chan=chan, value=value)

    def _choose_sync(self, pairs) -> Label:
        # group by interrupt so that an interrupt's ready branches compete by weight
        actors: list = []
        groups: dict = {}
        for inp, out, _ in pairs:
            owner = inp[1] if inp[3] else (out[1] if out[3] else None)
            if owner is None:
                actors.append(("pair", (inp, out)))
            else:
                if id(owner) not in groups:
                    groups[id(owner)] = []
                    actors.append(("int", owner))
                groups[id(owner)].append((inp, out))
        pick = actors[0] if len(actors) == 1 else actors[int(self.sched.integers(len(actors)))]
        if pick[0] == "pair":
            return self._sync(*pick[1])
        owner = pick[1]
        cands = groups[id(owner)]
        by_branch = {}
        for inp, out in cands:
            br = inp[2] if inp[1] is owner else out[2]
            by_branch.setdefault(br, (inp, out))
        branches = sorted(by_branch)
        if len(branches) == 1:
            j = 0
        else:
            weights = [owner.head.branches[b].weight for b in branches]
            j = weighted_pick(weights, rngmod.uniform(owner.rng))
        return self._sync(*by_branch[branches[j]])

    def _delay(self) -> Label | None:
        evolvers = [c for c in self.components if c.integ is not None and not c.at_boundary]
        if not evolvers:
            return self._idle()
        if self.now >= self.cfg.t_max:
            self.exit = TIMEOUT
            return None
        T = self.cfg.t_max
        waiting = {id(c) for inp, out, en in self._pairs() if not en for c in (inp[1], out[1])}
        try:
            for c in evolvers:
                if id(c) in waiting and isinstance(c.head, Interrupt):
                    t = c.integ.next_grid_after(self.now)
                    if t is not None:
                        T = min(T, t)
            for c in evolvers:
                tb = c.integ.boundary_time(T)
                if tb is not None:
                    T = min(T, tb)
            for c in evolvers:
                c.integ.advance_to(T)
        except IntegrationError as exc:
            raise ExecutionError(str(exc), exc.time) from None
        self._record_delay(evolvers, T)
        d = T - self.now
        self.now = T
        self.instant_steps = 0
        ended = True
        for c in evolvers:
            integ = c.integ
            state = integ.state_at(T)
            for name, x in zip(c.head.block.vars, state):
                self.vals[name] = float(x)
            if integ.exit is not None and integ.exit[0] == BOUNDARY and integ.exit[1] == T:
                c.at_boundary = True
            else:
                ended = False
            c.at_grid = integ.is_grid_time(T)
        if T >= self.cfg.t_max and not ended:
            self.exit = TIMEOUT
        return Label("delay", "Cont-1", delay=d)

    def _idle(self) -> Label | None:
        """Nothing evolves.  A component waiting on a channel that has no
        partner in the system waits for the environment until ``t_max``
        (In-2/Out-2); otherwise the waiting is circular and the run is
        deadlocked."""
        open_wait = False
        for c in self.components:
            head = c.head
            if isinstance(head, (Input, Output)):
                d = INPUT if isinstance(head, Input) else OUTPUT
                open_wait |= (head.chan, d) in self.open_ends
        if not open_wait:
            self.exit = DEADLOCK
            return None
        d = self.cfg.t_max - self.now
        self.exit = TIMEOUT
        if d <= 0:
            return None
        self.now = self.cfg.t_max
        self.instant_steps = 0
        self._record_point()
        return Label("delay", "In-2/Out-2", delay=d)

    def _record_delay(self, evolvers, T):
        if self.recorder is None:
            return
        rec = self.recorder
        time_sets = [c.integ.samples(self.now, T)[0] for c in evolvers]
        times = time_sets[0] if len(time_sets) == 1 else np.unique(np.concatenate(time_sets))
        if len(times) == 0 or times[-1] != T:
            times = np.append(times, T)
        values = np.repeat(rec.row(self.vals)[None, :], len(times), axis=0)
        for c in evolvers:
            integ = c.integ
            ts = integ.times[: integ.n]
            i0 = max(int(np.searchsorted(ts, self.now, side="right")) - 1, 0)
            i1 = int(np.searchsorted(ts, T, side="right")) + 1
            seg_t = ts[i0:i1]
            seg_s = integ.states[: integ.n][i0:i1]
            for j, name in enumerate(c.head.block.vars):
                values[:, rec.index[name]] = np.interp(times, seg_t, seg_s[:, j])
        rec.block(times, values, len(self.tr), frozenset(self.rdy))

    # -- driver ----------------------------------------------------------------
    def step(self) -> Label | None:
        """Apply one rule.  Returns None once the run has ended."""
        if self.exit is not None:
            return None
        if _finished(self.root):
            self.exit = TERMINATED
            return None
        try:
            label = self._step()
        except EvaluationError as exc:
            raise ExecutionError(str(exc), self.now) from None
        if label is not None and label.kind != "delay":
            self.steps += 1
            self.instant_steps += 1
            self._record_point()
            if self.instant_steps > self.cfg.max_instant_steps:
                self.exit = STEP_LIMIT
        elif label is not None:
            self.steps += 1
        return label

    def _step(self) -> Label | None:
        moves = self._local_moves()
        if moves:
            c, rule = moves[0] if len(moves) == 1 else moves[int(self.sched.integers(len(moves)))]
            return self._do_local(c, rule)
        pairs = [p for p in self._pairs() if p[2]]
        if pairs:
            return self._choose_sync(pairs)
        return self._delay()

    def run(self) -> RunRecord:
        while self.step() is not None:
            pass
        if self.exit is None:
            self.exit = TERMINATED
        flow = self.recorder.finish(self.tr) if self.recorder is not None else None
        return RunRecord(
            seed=self.seed,
            final=self.state(),
            flow=flow,
            trace=tuple(self.tr),
            exit=self.exit,
            component_traces={c.path: tuple(c.tr) for c in self.components},
            steps=self.steps,
        )


def check_program(p: Process) -> None:
    diags = validate(p)
    if diags:
        raise ExecutionError("invalid program: " + "; ".join(d.message for d in diags))


def run(p: Process, init: Mapping[str, float] | ProcState | None, seed: int, cfg: RunConfig | None = None,
        stream: tuple = (), backend: str | None = None, record_flow: bool = True,
        checked: bool = False) -> RunRecord:
    """One sampled run of ``p``; a deterministic function of its arguments."""
    if not checked:
        check_program(p)
    m = Machine(p, init, seed, cfg, stream=stream, backend=backend, record_flow=record_flow)
    rec = m.run()
    if stream and len(stream) == 1:
        rec.run = stream[0]
    return rec


def step(p: Process, state: ProcState | Mapping[str, float], seed: int, cfg: RunConfig | None = None,
         stream: tuple = ()):
    """Apply one rule to ``(p, state)``.

    Returns ``(label, p', state', flow segment)``; ``label`` is None when no
    rule applies (``p`` terminated, deadlocked or out of time).
    """
    m = Machine(p, state, seed, cfg, stream=stream)
    start = len(m.recorder.times)
    label = m.step()
    rec = m.recorder
    seg = _FlowRecorder(rec.names)
    seg.times, seg.values, seg.tr_len, seg.rdy = (
        rec.times[start - 1:], rec.values[start - 1:], rec.tr_len[start - 1:], rec.rdy[start - 1:]
    )
    return label, m.process(), m.state(), seg.finish(m.tr)


__all__ = [
    "run", "step", "Machine", "RunRecord", "Flow", "Label", "Loop", "ExecutionError",
    "pchoice_branch", "weighted_pick", "TERMINATED", "TIMEOUT", "DEADLOCK", "STEP_LIMIT",
]

"""Euler–Maruyama integration of SDE blocks with boundary-exit detection.

An :class:`Integrator` advances one block from its entry state on the fixed
grid ``t0 + k*dt`` (plus one shorter final step landing on ``t_max``).  It
integrates lazily: callers ask for the path up to some time and the
integrator extends it in batches through the kernel.  When the domain turns
false between two grid points, the crossing is refined by bisection on the
linear interpolant of the two samples, and the path ends there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import kernel
from .config import RunConfig
from .expr import EvaluationError, evaluate
from .syntax import SdeBlock
from .rng import brownian_increment  # re-exported
from .trace import ProcState

BOUNDARY = "boundary"
INTERRUPTED = "interrupted"
TIMEOUT = "timeout"

_FIRST_CHUNK = 64
_MAX_CHUNK = 65536


class IntegrationError(ArithmeticError):
    """The path left the finite reals or a coefficient failed to evaluate."""

    def __init__(self, message: str, time: float, state):
        super().__init__(f"{message} at t={time!r}, state={list(state)!r}")
        self.time = time
        self.state = state


_PROGRAMS: dict = {}


def program_for(block: SdeBlock) -> kernel.KernelProgram:
    # blocks are immutable and hashable; compile each distinct block once
    prog = _PROGRAMS.get(block)
    if prog is None:
        prog = kernel.compile_block(block)
        if len(_PROGRAMS) > 1024:
            _PROGRAMS.clear()
        _PROGRAMS[block] = prog
    return prog


def em_step(s, b, sigma, env: Mapping[str, float], dt: float, dW, vars=()) -> np.ndarray:
    """One Euler–Maruyama step ``s + b(s) dt + sigma(s) dW``.

    ``b`` is a sequence of drift expressions and ``sigma`` a sequence of
    rows.  ``env`` binds the parameters; ``vars`` names the entries of ``s``.
    """
    s = [float(x) for x in s]
    env = dict(env)
    env.update(zip(vars, s))
    out = []
    for i, bi in enumerate(b):
        acc = s[i] + evaluate(bi, env) * dt
        for j, sij in enumerate(sigma[i]):
            acc = acc + evaluate(sij, env) * float(dW[j])
        out.append(acc)
    return np.array(out)


class Integrator:
    """Lazily integrated path of one block entered at time ``t0``."""

    def __init__(self, block: SdeBlock, vals: Mapping[str, float], t0: float, rng: np.random.Generator,
                 cfg: RunConfig, backend: str | None = None):
        self.prog = program_for(block)
        self.block = block
        self.rng = rng
        self.cfg = cfg
        self.backend = backend
        self.d, self.k = self.prog.d, self.prog.k
        try:
            self.v = np.array([float(vals[n]) for n in self.prog.names], dtype=np.float64)
        except KeyError as exc:
            raise EvaluationError(f"unbound variable {exc.args[0]!r} in SDE block") from None
        self.t0 = float(t0)
        self.h = float(cfg.dt)
        self.t_max = float(cfg.t_max)
        self.tol = cfg.tol
        # full grid steps that fit before t_max, then an optional short step
        span = self.t_max - self.t0
        n_full = int(math.floor(span / self.h)) if span > 0 else 0
        if span > 0 and self.t0 + (n_full + 1) * self.h <= self.t_max + self.tol:
            n_full += 1
        self.n_full = n_full
        rem = self.t_max - (self.t0 + n_full * self.h)
        self.rem = rem if rem > self.tol else 0.0
        cap = 16
        self.times = np.empty(cap)
        self.states = np.empty((cap, self.d))
        self.n = 1
        self.times[0] = self.t0
        self.states[0] = self.v[: self.d]
        self.steps = 0  # grid steps taken
        self.exit = None  # (kind, time, state) once the path ends
        self._z = np.empty(0)
        self._zpos = 0
        self._chunk = _FIRST_CHUNK
        if not self._guard(self.v):
            self.exit = (BOUNDARY, self.t0, self.states[0].copy())

    # -- helpers -----------------------------------------------------------
    def _guard(self, v) -> bool:
        try:
            return kernel.guard(self.prog, list(v))
        except (EvaluationError, ValueError, OverflowError, ZeroDivisionError) as exc:
            raise IntegrationError(f"domain evaluation failed ({exc})", self.t_last, v[: self.d]) from None

    @property
    def t_last(self) -> float:
        return float(self.times[self.n - 1])

    @property
    def done(self) -> bool:
        return self.exit is not None

    def _grow(self, extra: int):
        need = self.n + extra
        if need <= len(self.times):
            return
        cap = max(need, 2 * len(self.times))
        times = np.empty(cap)
        times[: self.n] = self.times[: self.n]
        states = np.empty((cap, self.d))
        states[: self.n] = self.states[: self.n]
        self.times, self.states = times, states

    def _normals(self, nsteps: int) -> np.ndarray:
        avail = (len(self._z) - self._zpos) // self.k
        if avail == 0:
            self._z = self.rng.standard_normal(self._chunk * self.k)
            self._zpos = 0
            self._chunk = min(2 * self._chunk, _MAX_CHUNK)
            avail = len(self._z) // self.k
        take = min(nsteps, avail)
        z = self._z[self._zpos: self._zpos + take * self.k]
        self._zpos += take * self.k
        return z

    # -- integration -------------------------------------------------------
    def advance_to(self, T: float) -> None:
        """Extend the path until it reaches ``T`` (or ends earlier)."""
        while self.exit is None and self.t_last < T:
            remaining_full = self.n_full - self.steps
            if remaining_full > 0:
                want = remaining_full
                if T != math.inf:
                    want = min(want, max(1, int(math.ceil((T - self.t_last) / self.h - 1e-9))))
                z = self._normals(want)
                take = len(z) // self.k
                self._run(z, self.h, take, full=True)
            elif self.rem > 0 and self.steps == self.n_full:
                z = self._normals(1)
                self._run(z, self.rem, 1, full=False)
            else:
                self.exit = (TIMEOUT, self.t_last, self.states[self.n - 1].copy())

    def advance_all(self) -> None:
        self.advance_to(math.inf)

    def _run(self, z, h, nsteps, full: bool):
        self._grow(nsteps)
        out = self.states[self.n: self.n + nsteps]
        start_state = self.v[: self.d].copy()
        taken, status = kernel.integrate(self.prog, self.v, z, h, nsteps, out, backend=self.backend)
        base = self.steps
        if full:
            self.times[self.n: self.n + taken] = self.t0 + self.h * np.arange(base + 1, base + taken + 1)
        else:
            self.times[self.n: self.n + taken] = self.t_max
        if full and base + taken == self.n_full and self.rem == 0 and taken > 0:
            self.times[self.n + taken - 1] = self.t_max
        prev_state = self.states[self.n + taken - 2].copy() if taken >= 2 else start_state
        self.n += taken
        self.steps += taken
        if status == kernel.OK:
            if self.steps == self.n_full + (1 if self.rem > 0 else 0):
                self.exit = (TIMEOUT, self.t_last, self.states[self.n - 1].copy())
            return
        if status == kernel.GUARD_FALSE:
            self._refine(prev_state)
            return
        if status == kernel.NON_FINITE:
            raise IntegrationError("non-finite state", self.t_last, self.states[self.n - 1])
        # evaluation error: reproduce it in Python for the message
        env = dict(zip(self.prog.names, self.v.tolist()))
        message = "coefficient evaluation failed"
        try:
            for e in list(self.block.drift) + [e for row in self.block.diffusion for e in row]:
                evaluate(e, env)
        except (EvaluationError, ValueError, OverflowError) as exc:
            message = f"coefficient evaluation failed ({exc})"
        raise IntegrationError(message, self.t_last, self.v[: self.d])

    def _refine(self, s_a):
        """Bisect the last interval, where the domain went from true to false."""
        t_a = float(self.times[self.n - 2])
        t_b = float(self.times[self.n - 1])
        s_b = self.states[self.n - 1].copy()
        v = self.v.copy()

        def at(t):
            w = (t - t_a) / (t_b - t_a)
            return s_a + w * (s_b - s_a)

        lo, hi = t_a, t_b
        while hi - lo > self.tol:
            mid = 0.5 * (lo + hi)
            v[: self.d] = at(mid)
            if self._guard(v):
                lo = mid
            else:
                hi = mid
        t_star = 0.5 * (lo + hi)
        s_star = at(t_star)
        self.times[self.n - 1] = t_star
        self.states[self.n - 1] = s_star
        self.v[: self.d] = s_star
        self.exit = (BOUNDARY, t_star, s_star.copy())

    # -- queries -----------------------------------------------------------
    def boundary_time(self, limit: float) -> float | None:
        """Exit time if the domain is left at or before ``limit``."""
        self.advance_to(limit)
        if self.exit is not None and self.exit[0] == BOUNDARY and self.exit[1] <= limit:
            return self.exit[1]
        return None

    def state_at(self, t: float) -> np.ndarray:
        """Path value at ``t`` (exact at samples, linear in between)."""
        self.advance_to(t)
        times = self.times[: self.n]
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"time {t!r} precedes the block entry {self.t0!r}")
        if i >= self.n - 1:
            if t > self.t_last + self.tol:
                raise ValueError(f"time {t!r} is past the end of the path ({self.t_last!r})")
            return self.states[self.n - 1].copy()
        if times[i] == t:
            return self.states[i].copy()
        w = (t - times[i]) / (times[i + 1] - times[i])
        return self.states[i] + w * (self.states[i + 1] - self.states[i])

    def samples(self, t_lo: float, t_hi: float):
        """Sample times and states with ``t_lo < t <= t_hi``."""
        self.advance_to(t_hi)
        times = self.times[: self.n]
        i = int(np.searchsorted(times, t_lo, side="right"))
        j = int(np.searchsorted(times, t_hi, side="right"))
        return times[i:j], self.states[i:j]

    def is_grid_time(self, t: float) -> bool:
        times = self.times[: self.n]
        i = int(np.searchsorted(times, t))
        return i < self.n and times[i] == t and (self.exit is None or self.exit[1] != t or self.exit[0] != BOUNDARY)

    def next_grid_after(self, t: float) -> float | None:
        """First sample time strictly after ``t``, or None if the path ends first."""
        while True:
            times = self.times[: self.n]
            i = int(np.searchsorted(times, t, side="right"))
            if i < self.n:
                return float(times[i])
            if self.exit is not None:
                return None
            self.advance_to(self.t_last + self.h * 0.5)


@dataclass
class SdePath:
    times: np.ndarray
    states: np.ndarray
    vars: tuple
    exit: str
    exit_time: float
    exit_state: np.ndarray

    def to_csv(self) -> str:
        lines = ["time," + ",".join(self.vars)]
        for t, row in zip(self.times, self.states):
            lines.append(",".join(f"{x:.17g}" for x in (t, *row)))
        return "\n".join(lines) + "\n"


def evolve(block: SdeBlock, entry: ProcState, run_cfg: RunConfig, rng: np.random.Generator,
           poll: Callable[[float, np.ndarray], bool] | None = None, backend: str | None = None) -> SdePath:
    """Integrate ``block`` from ``entry`` until the domain is left, ``poll``
    reports a ready partner (checked at each grid point), or ``t_max``."""
    env = entry.env()
    integ = Integrator(block, env, entry.now, rng, run_cfg, backend=backend)
    if poll is None:
        integ.advance_all()
        kind, t_exit, s_exit = integ.exit
    else:
        kind = None
        while integ.exit is None:
            t_next = integ.next_grid_after(integ.t_last)
            if t_next is None:
                break
            s = integ.state_at(t_next)
            if integ.exit is not None and integ.exit[0] == BOUNDARY and integ.exit[1] == t_next:
                break
            if poll(t_next, s):
                kind, t_exit, s_exit = INTERRUPTED, t_next, s
                break
        if kind is None:
            kind, t_exit, s_exit = integ.exit
    end = integ.n if kind != INTERRUPTED else int(np.searchsorted(integ.times[: integ.n], t_exit, side="right"))
    return SdePath(integ.times[:end].copy(), integ.states[:end].copy(), tuple(block.vars), kind,
                   float(t_exit), np.asarray(s_exit, dtype=float))


__all__ = [
    "Integrator", "IntegrationError", "SdePath", "evolve", "em_step", "brownian_increment",
    "BOUNDARY", "INTERRUPTED", "TIMEOUT",
]

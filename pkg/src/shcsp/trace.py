"""Timed traces, readiness, process states and their parallel merge."""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class Comm:
    """``<ch.value, time>``: a communication on ``chan``."""

    chan: str
    value: float
    time: float

    def __post_init__(self):
        _check_time(self.time)

    def __str__(self):
        return f"<{self.chan}.{self.value!r}, {self.time!r}>"


@dataclass(frozen=True)
class Internal:
    """``<tau, time>``: an internal step."""

    time: float

    def __post_init__(self):
        _check_time(self.time)

    def __str__(self):
        return f"<tau, {self.time!r}>"


TimedItem = Comm | Internal


def _check_time(t):
    if not (t >= 0 and t != float("inf")):
        raise ValueError(f"trace time must be finite and nonnegative, got {t!r}")


def is_sorted(trace: Sequence) -> bool:
    return all(a.time <= b.time for a, b in zip(trace, trace[1:]))


def chans_of(trace: Iterable) -> set[str]:
    return {it.chan for it in trace if isinstance(it, Comm)}


def project(trace: Iterable, chans) -> tuple:
    """Communications of ``trace`` on channels in ``chans``."""
    return tuple(it for it in trace if isinstance(it, Comm) and it.chan in chans)


def comm_count(trace: Iterable, chan: str) -> int:
    return sum(1 for it in trace if isinstance(it, Comm) and it.chan == chan)


@dataclass(frozen=True)
class ReadyItem:
    """Readiness ``h.ch?`` / ``h.ch!``.

    The prefix ``h`` is kept as the number of communications on ``chan`` it
    contains, which is what two sides of a channel can agree on.
    """

    chan: str
    direction: str
    count: int

    @classmethod
    def at(cls, chan: str, direction: str, prefix: Iterable) -> "ReadyItem":
        return cls(chan, direction, comm_count(prefix, chan))

    def dual(self) -> "ReadyItem":
        return ReadyItem(self.chan, "!" if self.direction == "?" else "?", self.count)

    def __str__(self):
        return f"#{self.count}.{self.chan}{self.direction}"


@dataclass(frozen=True)
class ProcState:
    vals: Mapping[str, float]
    now: float = 0.0
    tr: tuple = ()
    rdy: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "vals", MappingProxyType(dict(self.vals)))
        object.__setattr__(self, "tr", tuple(self.tr))
        object.__setattr__(self, "rdy", frozenset(self.rdy))
        if not self.now >= 0:
            raise ValueError(f"now must be nonnegative, got {self.now!r}")

    def __eq__(self, other):
        if not isinstance(other, ProcState):
            return NotImplemented
        return (dict(self.vals) == dict(other.vals) and self.now == other.now
                and self.tr == other.tr and self.rdy == other.rdy)

    def __hash__(self):
        return hash((tuple(sorted(self.vals.items())), self.now, self.tr, self.rdy))

    def env(self) -> dict:
        """Valuation used to evaluate expressions, with ``now`` bound."""
        out = dict(self.vals)
        out.setdefault("now", self.now)
        return out


# ---------------------------------------------------------------------------
# alphabetized parallel

# Internal items carry no channel.  Each side's internal items are treated
# as communications on a private pseudo-channel of that side, so they are
# interleaved but never identified.


def merge_traces(t1: Sequence, t2: Sequence, sync: Iterable[str] = ()) -> set[tuple]:
    """All time-sorted traces whose projections give back ``t1`` and ``t2``.

    Channels used by both traces are synchronized whether or not they are
    listed in ``sync``; a channel in ``sync`` used by only one side makes the
    merge empty as soon as that side communicates on it.
    """
    t1, t2 = tuple(t1), tuple(t2)
    c1, c2 = chans_of(t1), chans_of(t2)
    ysync = (c1 & c2) | (set(sync) & (c1 | c2))
    return set(_merge(t1, 0, t2, 0, ysync, []))


def _is_sync(item, ysync) -> bool:
    return isinstance(item, Comm) and item.chan in ysync


def _merge(t1, i, t2, j, ysync, acc):
    # yields results with left-side moves explored first
    if i == len(t1) and j == len(t2):
        yield tuple(acc)
        return
    h1 = t1[i] if i < len(t1) else None
    h2 = t2[j] if j < len(t2) else None
    if h1 is not None and h2 is not None and _is_sync(h1, ysync) and _is_sync(h2, ysync):
        if h1 == h2:
            acc.append(h1)
            yield from _merge(t1, i + 1, t2, j + 1, ysync, acc)
            acc.pop()
        return
    if h1 is not None and not _is_sync(h1, ysync) and (h2 is None or h1.time <= h2.time):
        acc.append(h1)
        yield from _merge(t1, i + 1, t2, j, ysync, acc)
        acc.pop()
    if h2 is not None and not _is_sync(h2, ysync) and (h1 is None or h2.time <= h1.time):
        acc.append(h2)
        yield from _merge(t1, i, t2, j + 1, ysync, acc)
        acc.pop()


def first_merge(t1: Sequence, t2: Sequence, sync: Iterable[str] = ()) -> tuple | None:
    """The element of ``merge_traces`` that prefers the left side, or None."""
    t1, t2 = tuple(t1), tuple(t2)
    c1, c2 = chans_of(t1), chans_of(t2)
    ysync = (c1 & c2) | (set(sync) & (c1 | c2))
    return next(_merge(t1, 0, t2, 0, ysync, []), None)


class NotParallelable(ValueError):
    pass


def merge_states(r1: ProcState, r2: ProcState, sync: Iterable[str] = ()) -> ProcState:
    """``r1 (+) r2``: union of valuations and ready sets, merged trace."""
    shared = set(r1.vals) & set(r2.vals)
    if shared:
        raise NotParallelable(f"states share variables {sorted(shared)}")
    if r1.now != r2.now:
        raise NotParallelable(f"states disagree on now: {r1.now!r} vs {r2.now!r}")
    tr = first_merge(r1.tr, r2.tr, sync)
    if tr is None:
        raise NotParallelable("traces have no alphabetized parallel")
    vals = dict(r1.vals)
    vals.update(r2.vals)
    return ProcState(vals, r1.now, tr, r1.rdy | r2.rdy)


def item_to_json(it) -> dict:
    if isinstance(it, Comm):
        return {"kind": "comm", "chan": it.chan, "value": it.value, "time": it.time}
    return {"kind": "tau", "time": it.time}


def item_from_json(d: dict):
    if d["kind"] == "comm":
        return Comm(d["chan"], float(d["value"]), float(d["time"]))
    if d["kind"] == "tau":
        return Internal(float(d["time"]))
    raise ValueError(f"unknown trace item kind {d['kind']!r}")

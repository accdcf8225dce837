"""Run configuration."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class RepeatPolicy:
    """How many times ``P*`` runs its body: a fixed count, or a geometric
    count where each further iteration happens with probability ``q``."""

    kind: str = "fixed"
    n: int = 1
    q: float = 0.5

    def __post_init__(self):
        if self.kind == "fixed":
            if int(self.n) != self.n or self.n < 0:
                raise ValueError(f"fixed repeat count must be a nonnegative integer, got {self.n!r}")
        elif self.kind == "geometric":
            if not 0 <= self.q < 1:
                raise ValueError(f"geometric continuation probability must be in [0, 1), got {self.q!r}")
        else:
            raise ValueError(f"unknown repeat policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "RepeatPolicy":
        """``fixed:N`` or ``geom:Q``."""
        kind, _, arg = text.partition(":")
        if kind == "fixed":
            return cls("fixed", n=int(arg))
        if kind in ("geom", "geometric"):
            return cls("geometric", q=float(arg))
        raise ValueError(f"bad repeat policy {text!r}; expected fixed:N or geom:Q")

    def __str__(self):
        return f"fixed:{self.n}" if self.kind == "fixed" else f"geom:{self.q!r}"


@dataclass(frozen=True)
class RunConfig:
    dt: float = 1e-3
    t_max: float = 10.0
    max_instant_steps: int = 100_000
    repeat: RepeatPolicy = RepeatPolicy()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_max >= 0 or self.t_max == float("inf"):
            raise ValueError(f"t_max must be finite and nonnegative, got {self.t_max!r}")
        # a zero horizon is accepted so that degenerate runs can be recorded
        if self.t_max > 0 and self.dt > self.t_max:
            raise ValueError(f"dt ({self.dt!r}) must not exceed t_max ({self.t_max!r})")
        if self.max_instant_steps < 1:
            raise ValueError("max_instant_steps must be at least 1")

    @property
    def tol(self) -> float:
        """Time tolerance of boundary refinement."""
        return 1e-9 * max(1.0, self.t_max)

    def to_json(self) -> dict:
        return {"dt": self.dt, "t_max": self.t_max, "max_instant_steps": self.max_instant_steps,
                "repeat": str(self.repeat)}

"""Stochastic Hybrid CSP: parsing, simulation, assertions and certificates."""
from .config import RepeatPolicy, RunConfig
from .execution import RunRecord, run, step
from .parser import parse, parse_block, parse_bool, parse_expr
from .pretty import pretty
from .syntax import validate

__version__ = "0.1.0"

__all__ = [
    "RepeatPolicy", "RunConfig", "RunRecord", "run", "step", "parse", "parse_block", "parse_bool",
    "parse_expr", "pretty", "validate",
]

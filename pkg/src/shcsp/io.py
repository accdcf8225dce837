"""Artifact files: JSON with 17-digit numbers, CSV flows, atomic writes.

Every float is written with 17 significant digits so that reading it back
gives the same binary64 value.  The schemas of the files the CLI emits are
in :data:`SCHEMAS` (JSON Schema, draft 2020-12).
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot write non-finite number {x!r}")
    return format(x, ".17g")


class _Encoder(json.JSONEncoder):
    """Standard encoder whose floats are spelled with 17 significant digits."""

    def iterencode(self, o, _one_shot=False):
        return json.encoder._make_iterencode(
            {} if self.check_circular else None, self.default, json.encoder.encode_basestring_ascii
            if self.ensure_ascii else json.encoder.encode_basestring, self.indent, format_float,
            self.key_separator, self.item_separator, self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


def dumps(obj, indent: int | None = 1) -> str:
    return json.dumps(obj, cls=_Encoder, indent=indent, allow_nan=False)


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, dumps(obj) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


_NUM = {"type": "number"}
_TRACE_ITEM = {
    "type": "object",
    "required": ["kind", "time"],
    "properties": {
        "kind": {"enum": ["comm", "tau"]},
        "chan": {"type": "string"},
        "value": _NUM,
        "time": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
    "if": {"properties": {"kind": {"const": "comm"}}},
    "then": {"required": ["chan", "value"]},
    "else": {"not": {"anyOf": [{"required": ["chan"]}, {"required": ["value"]}]}},
}

SCHEMAS = {
    "run": {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "RunRecord",
        "type": "object",
        "required": ["seed", "run", "exit", "final", "trace"],
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "run": {"type": ["integer", "null"], "minimum": 0},
            "exit": {"enum": ["terminated", "timeout", "deadlock", "step-limit", "error"]},
            "error": {"type": "string"},
            "final": {
                "type": "object",
                "required": ["vals", "now"],
                "properties": {
                    "vals": {"type": "object", "additionalProperties": _NUM},
                    "now": {"type": "number", "minimum": 0},
                    "rdy": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "string"}, {"enum": ["?", "!"]}, {"type": "integer", "minimum": 0}],
                            "minItems": 3,
                            "maxItems": 3,
                        },
                    },
                },
            },
            "trace": {"type": "array", "items": _TRACE_ITEM},
            "steps": {"type": "integer", "minimum": 0},
            "flow": {"type": "string"},
        },
        "additionalProperties": False,
    },
    "index": {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "SimulationIndex",
        "type": "object",
        "required": ["program", "seed", "runs", "config", "records", "exits"],
        "properties": {
            "program": {"type": "string"},
            "seed": {"type": "integer", "minimum": 0},
            "runs": {"type": "integer", "minimum": 0},
            "init": {"type": "object", "additionalProperties": _NUM},
            "config": {"type": "object"},
            "records": {"type": "array", "items": {"type": "string"}},
            "flows": {"type": "array", "items": {"type": "string"}},
            "exits": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        },
        "additionalProperties": False,
    },
    "estimate": {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Estimate",
        "type": "object",
        "required": ["phat", "n", "lo", "hi", "verdict"],
        "properties": {
            "phat": {"type": "number", "minimum": 0, "maximum": 1},
            "n": {"type": "integer", "minimum": 1},
            "lo": {"type": "number", "minimum": 0, "maximum": 1},
            "hi": {"type": "number", "minimum": 0, "maximum": 1},
            "verdict": {"enum": ["holds", "fails", "inconclusive", None]},
            "failures": {"type": "integer", "minimum": 0},
            "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "formula": {"type": "string"},
            "parts": {"type": "array"},
        },
        "additionalProperties": False,
    },
    "certificate": {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "CertificateResult",
        "type": "object",
        "required": ["verdict", "smoothness", "premises"],
        "properties": {
            "verdict": {"enum": ["certified", "partial", "rejected", "unsupported"]},
            "premise": {"type": ["string", "null"]},
            "reason": {"type": ["string", "null"]},
            "smoothness": {"enum": ["smooth", "non-C2-detected"]},
            "bound": {"type": ["number", "null"]},
            "bound_exact": {"type": ["string", "null"]},
            "lie_derivative": {"type": ["string", "null"]},
            "singular_set": {"type": "array", "items": {"type": "string"}},
            "exit_closure": {"type": ["string", "null"]},
            "premises": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "method", "passed"],
                    "properties": {
                        "name": {"type": "string"},
                        "method": {"type": "string"},
                        "passed": {"type": "boolean"},
                        "detail": {"type": "string"},
                        "witness": {"type": "object", "additionalProperties": _NUM},
                    },
                    "additionalProperties": False,
                },
            },
            "notes": {"type": "array", "items": {"type": "string"}},
        },
        "additionalProperties": False,
    },
}


def flow_header_ok(text: str) -> bool:
    """Flow CSV files start with ``time`` followed by variable names."""
    first = text.split("\n", 1)[0].split(",")
    return first[0] == "time" and all(c.isidentifier() for c in first[1:])


__all__ = ["dumps", "atomic_write", "write_json", "read_json", "format_float", "SCHEMAS", "flow_header_ok"]

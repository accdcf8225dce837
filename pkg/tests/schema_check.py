"""Validate every artifact in an output directory against the shipped schemas.

    python3 tests/schema_check.py DIR [DIR ...]

``run_*.json``, ``index.json``, ``estimate.json`` and ``certificate.json``
are checked against :data:`shcsp.io.SCHEMAS`; ``flow_*.csv`` files must have
a ``time,...`` header and one finite number (or an empty cell) per column.
Exit status is the number of invalid files, capped at 1.
"""
from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

from jsonschema import Draft202012Validator

from shcsp.io import SCHEMAS, flow_header_ok


def schema_for(path: Path) -> str | None:
    name = path.name
    if name.startswith("run_") and name.endswith(".json"):
        return "run"
    return {"index.json": "index", "estimate.json": "estimate", "certificate.json": "certificate"}.get(name)


def _check_csv(path: Path) -> list[str]:
    text = path.read_text()
    if not flow_header_ok(text):
        return ["bad header"]
    rows = list(csv.reader(text.splitlines()))
    width = len(rows[0])
    errors = []
    last = -math.inf
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            errors.append(f"line {k}: {len(row)} cells, expected {width}")
            continue
        t = float(row[0])
        if not math.isfinite(t) or t < last:
            errors.append(f"line {k}: time {row[0]} not finite or decreasing")
        last = t
        for cell in row[1:]:
            if cell and not math.isfinite(float(cell)):
                errors.append(f"line {k}: non-finite cell {cell}")
    return errors


def check_file(path: Path) -> list[str]:
    path = Path(path)
    if path.suffix == ".csv":
        return _check_csv(path)
    kind = schema_for(path)
    if kind is None:
        return []
    data = json.loads(path.read_text())
    v = Draft202012Validator(SCHEMAS[kind])
    return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in v.iter_errors(data)]


def check_dir(root) -> dict[str, list[str]]:
    """Errors per checked file (empty lists for valid files)."""
    out = {}
    for path in sorted(Path(root).rglob("*")):
        if path.is_file() and (path.suffix == ".csv" or schema_for(path)):
            out[str(path)] = check_file(path)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    bad = 0
    for d in argv:
        for f, errs in check_dir(d).items():
            if errs:
                bad += 1
                for e in errs:
                    print(f"{f}: {e}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())

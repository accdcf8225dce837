"""Command-line front end.

::

    shcsp parse    --program FILE
    shcsp simulate --program FILE [--init k=v,...] [--runs N] [--seed S] [--out DIR] [--csv]
    shcsp estimate --program FILE --formula FILE|TEXT [--runs N] [--confidence DELTA] [--out DIR]
    shcsp certify  --request FILE [--out DIR]
    shcsp lie      --program FILE --f EXPR [--block K]

Run options shared by simulate and estimate: ``--dt``, ``--tmax``,
``--repeat fixed:N|geom:Q``.  ``SHCSP_SEED`` in the environment overrides
``--seed``.

Exit codes:

=========  ======================================================
parse      0 valid, 1 diagnostics, 2 file missing
simulate   0 all runs ok, 1 some run failed, 2 bad input
estimate   0 holds, 1 fails, 3 inconclusive, 2 formula/fragment error
certify    0 certified, 1 rejected, 3 unsupported or partial, 2 malformed
lie        0 printed, 1 not differentiable, 2 bad input
=========  ======================================================
"""
from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .assertions import (
    FAILS, HOLDS, EstimationError, FragmentError, Prob, check_prob, parse_prob,
)
from .cert import CERTIFIED, REJECTED, CertificateRequest, RequestError, check_sde_rule
from .config import RepeatPolicy, RunConfig
from .execution import ExecutionError, run
from .expr import EvaluationError, refs
from .parser import ParseError, parse, parse_expr
from .pretty import format_expr, pretty
from .symbolic import NonDifferentiable, lie_derivative
from .syntax import sde_blocks, validate


class UsageError(Exception):
    pass


def parse_init(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"--init entry {part!r} is not k=v")
        k, v = part.split("=", 1)
        k = k.strip()
        if not k.isidentifier():
            raise UsageError(f"--init name {k!r} is not an identifier")
        try:
            out[k] = float(v)
        except ValueError:
            raise UsageError(f"--init value for {k!r} is not a number: {v!r}") from None
    return out


def resolve_seed(seed: int) -> int:
    env = os.environ.get("SHCSP_SEED")
    if env is not None and env.strip():
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"SHCSP_SEED is not an integer: {env!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be in [0, 2**64)")
    return seed


def _config(args) -> RunConfig:
    try:
        return RunConfig(dt=args.dt, t_max=args.tmax, repeat=RepeatPolicy.parse(args.repeat))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_program(path):
    text = Path(path).read_text()
    return parse(text)


def _say(*parts, file=None):
    print(*parts, file=file or sys.stdout)


# ---------------------------------------------------------------------------
# commands


def cmd_parse(args) -> int:
    path = Path(args.program)
    try:
        text = path.read_text()
    except OSError as exc:
        _say(f"{path}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    try:
        program = parse(text)
    except ParseError as exc:
        _say(f"{path}:{exc.line}:{exc.col}: {exc.message}", file=sys.stderr)
        return 1
    diags = validate(program)
    if diags:
        for d in diags:
            _say(d.format(str(path)), file=sys.stderr)
        return 1
    _say(pretty(program))
    return 0


def _simulate_one(job):
    program, init, seed, cfg, i, csv = job
    try:
        rec = run(program, init, seed, cfg, stream=(i,), checked=True, record_flow=csv)
    except ExecutionError as exc:
        return i, {"seed": seed, "run": i, "exit": "error", "error": str(exc),
                   "final": {"vals": {}, "now": exc.time or 0.0}, "trace": []}, None
    data = rec.to_json()
    return i, data, rec.flow.to_csv() if csv else None


def cmd_simulate(args) -> int:
    program = _load_program(args.program)
    diags = validate(program)
    if diags:
        for d in diags:
            _say(d.format(args.program), file=sys.stderr)
        return 2
    init = parse_init(args.init)
    seed = resolve_seed(args.seed)
    cfg = _config(args)
    if args.runs < 0:
        raise UsageError("--runs must be nonnegative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(max(args.runs - 1, 0))))
    jobs = [(program, init, seed, cfg, i, args.csv) for i in range(args.runs)]
    if args.workers > 1 and args.runs > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = pool.map(_simulate_one, jobs, chunksize=max(1, args.runs // (4 * args.workers)))
            results = list(results)
    else:
        results = map(_simulate_one, jobs)
    records, flows, exits = [], [], Counter()
    for i, data, csv in results:
        name = f"run_{i:0{width}d}.json"
        if csv is not None:
            fname = f"flow_{i:0{width}d}.csv"
            io.atomic_write(out / fname, csv)
            data["flow"] = fname
            flows.append(fname)
        io.write_json(out / name, data)
        records.append(name)
        exits[data["exit"]] += 1
    index = {
        "program": str(args.program),
        "seed": seed,
        "runs": args.runs,
        "init": init,
        "config": cfg.to_json(),
        "records": records,
        "exits": dict(sorted(exits.items())),
    }
    if args.csv:
        index["flows"] = flows
    io.write_json(out / "index.json", index)
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(exits.items())) or "no runs"
    _say(f"{args.runs} run(s) written to {out} ({summary})")
    return 1 if exits.get("error") else 0


def _read_formula(arg: str) -> tuple[str, str]:
    path = Path(arg)
    try:
        is_file = path.is_file()
    except OSError:
        is_file = False
    if is_file:
        text = "\n".join(l.split("#", 1)[0] for l in path.read_text().splitlines()).strip()
        return text, str(path)
    return arg, "<formula>"


def cmd_estimate(args) -> int:
    program = _load_program(args.program)
    diags = validate(program)
    if diags:
        for d in diags:
            _say(d.format(args.program), file=sys.stderr)
        return 2
    text, where = _read_formula(args.formula)
    try:
        pf = parse_prob(text)
    except ParseError as exc:
        _say(f"{where}:{exc.line}:{exc.col}: {exc.message}", file=sys.stderr)
        return 2
    init = parse_init(args.init)
    seed = resolve_seed(args.seed)
    cfg = _config(args)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    if not 0 < args.confidence < 1:
        raise UsageError("--confidence must be in (0, 1)")
    try:
        verdict, estimates = check_prob(pf, program, init, args.runs, args.confidence, cfg, seed, args.workers)
    except (FragmentError, EstimationError, EvaluationError) as exc:
        _say(f"estimate: {exc}", file=sys.stderr)
        return 2
    if isinstance(pf, Prob):
        data = estimates[0].to_json()
        data["verdict"] = verdict
    else:
        first = estimates[0]
        data = {"phat": first.phat, "n": first.n, "lo": first.lo, "hi": first.hi, "verdict": verdict,
                "parts": [e.to_json() for e in estimates]}
    data["failures"] = sum(e.failures for e in estimates)
    data["delta"] = args.confidence
    data["formula"] = text
    if args.out:
        io.write_json(Path(args.out) / "estimate.json", data)
    _say(io.dumps({k: data[k] for k in ("phat", "n", "lo", "hi", "verdict")}, indent=None))
    return {HOLDS: 0, FAILS: 1}.get(verdict, 3)


def cmd_certify(args) -> int:
    try:
        req = CertificateRequest.load(args.request)
    except RequestError as exc:
        _say(f"{args.request}: {exc}", file=sys.stderr)
        return 2
    result = check_sde_rule(req)
    if args.out:
        out = Path(args.out)
        io.write_json(out / "certificate.json", result.to_json())
        io.atomic_write(out / "certificate.txt", result.report())
    sys.stdout.write(result.report())
    if result.verdict == CERTIFIED:
        return 0
    if result.verdict == REJECTED:
        return 1
    return 3


def cmd_lie(args) -> int:
    program = _load_program(args.program)
    blocks = list(sde_blocks(program))
    if not 0 <= args.block < len(blocks):
        raise UsageError(f"program has {len(blocks)} SDE block(s); no block {args.block}")
    block = blocks[args.block]
    defs = {}
    for e in list(block.drift) + [block.domain]:
        defs.update(refs(e))
    try:
        f = parse_expr(args.f, defs)
    except ParseError as exc:
        _say(f"--f:{exc.col}: {exc.message}", file=sys.stderr)
        return 2
    try:
        lf = lie_derivative(f, block)
    except NonDifferentiable as exc:
        _say(f"lie: {exc}", file=sys.stderr)
        return 1
    _say(format_expr(lf))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shcsp", description="Stochastic hybrid CSP tools")
    sub = ap.add_subparsers(dest="command", required=True)

    def run_opts(p):
        p.add_argument("--init", default="", help="initial valuation, k=v,...")
        p.add_argument("--runs", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--tmax", type=float, default=10.0)
        p.add_argument("--repeat", default="fixed:1", help="fixed:N or geom:Q")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("parse", help="check a program and print it")
    p.add_argument("--program", required=True)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("simulate", help="sample runs and write RunRecords")
    p.add_argument("--program", required=True)
    run_opts(p)
    p.add_argument("--out", default="shcsp-out")
    p.add_argument("--csv", action="store_true", help="also write flow CSV files")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate P(phi) and decide a bound")
    p.add_argument("--program", required=True)
    p.add_argument("--formula", required=True, help="file or text of a probability formula")
    run_opts(p)
    p.add_argument("--confidence", type=float, default=0.01, help="delta: the interval has coverage 1-delta")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("certify", help="check the SDE rule for a certificate request")
    p.add_argument("--request", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("lie", help="print the Lie derivative of f for a block")
    p.add_argument("--program", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--block", type=int, default=0)
    p.set_defaults(fn=cmd_lie)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        _say(f"shcsp {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        _say(f"shcsp {args.command}: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        _say(f"shcsp {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

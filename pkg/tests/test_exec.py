import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load
from shcsp.assertions import hoeffding_band
from shcsp.config import RepeatPolicy, RunConfig
from shcsp.execution import (
    DEADLOCK, STEP_LIMIT, TERMINATED, TIMEOUT, ExecutionError, pchoice_branch, run, step, weighted_pick,
)
from shcsp.expr import Add, Const, Var
from shcsp.parser import parse
from shcsp.syntax import Assign, Input, Output, Parallel, PChoice, Repeat, Seq, Skip, Stop
from shcsp.trace import Comm, Internal, ProcState, ReadyItem

DELTA = 0.01


# ---------------------------------------------------------------------------
# rule helpers


def test_pchoice_branch_examples():
    assert pchoice_branch(Fraction(1, 2), 0.5) == "left"
    assert pchoice_branch(Fraction(0), 0.0) == "left"
    assert pchoice_branch(Fraction(1), 0.999) == "left"
    assert pchoice_branch(Fraction(1, 2), 0.5000000000000001) == "right"


def test_pchoice_branch_is_exact():
    # 0.1 as a double is slightly above 1/10
    assert pchoice_branch(Fraction(1, 10), 0.1) == "right"
    assert pchoice_branch(Fraction(0.1), 0.1) == "left"


def test_weighted_pick_examples():
    # indices are 0-based: 0 is the first branch
    assert weighted_pick([1, 1], 0.3) == 0
    assert weighted_pick([7], 0.0) == 0
    assert weighted_pick([7], 0.999) == 0
    assert weighted_pick([1, 3], 0.25) == 1
    assert weighted_pick([1, 3], 0.2499999) == 0


@given(st.lists(st.fractions(min_value=Fraction(1, 100), max_value=10), min_size=1, max_size=6),
       st.floats(0, 1, exclude_max=True))
def test_weighted_pick_interval(weights, u):
    j = weighted_pick(weights, u)
    total = sum(weights)
    lo = sum(weights[:j]) / total
    hi = sum(weights[: j + 1]) / total
    assert lo <= Fraction(u) < hi


# ---------------------------------------------------------------------------
# step


def test_step_skip():
    label, p2, state, seg = step(Skip(), ProcState({}, 1.5), 0)
    assert label.kind == "tau"
    assert isinstance(p2, Stop)
    assert state.tr == (Internal(1.5),) and state.now == 1.5
    assert len(seg) >= 1 and seg.times[-1] == 1.5


def test_step_pchoice_one_takes_left():
    p = PChoice(Assign("x", 1), Fraction(1), Assign("x", 2))
    for seed in range(50):
        _, p2, _, _ = step(p, ProcState({}), seed)
        assert p2 == Assign("x", Const(1))


def test_step_pchoice_zero_takes_right_almost_surely():
    p = PChoice(Assign("x", 1), Fraction(0), Assign("x", 2))
    for seed in range(50):
        _, p2, _, _ = step(p, ProcState({}), seed)
        assert p2 == Assign("x", Const(2))


def test_step_sync_by_hand():
    p = Parallel(Output("ch", 1), Input("ch", "x"))
    state = ProcState({})
    labels = []
    while True:
        label, p, state, _ = step(p, state, 0)
        if label is None:
            break
        labels.append(label)
    rules = [lb.rule for lb in labels]
    assert sorted(rules[:2]) == ["In-1", "Out-1"]
    comm = labels[2]
    assert comm.kind == "comm" and comm.chan == "ch" and comm.value == 1.0
    assert state.vals["x"] == 1.0
    assert state.tr[0] == Comm("ch", 1.0, 0.0)


def test_step_records_readiness():
    label, p, state, _ = step(Seq(Output("ch", 3), Skip()), ProcState({}), 0)
    assert label.rule == "Out-1"
    assert ReadyItem("ch", "!", 0) in state.rdy


def test_step_delay_on_ode():
    label, _, state, seg = step(parse("{d[s] = 1 dt & s < 1}"), ProcState({"s": 0.0}), 0,
                                RunConfig(dt=0.1, t_max=5))
    assert label.kind == "delay"
    assert state.now == pytest.approx(1.0, abs=1e-6)
    assert seg.times[-1] == state.now and len(seg) > 5


# ---------------------------------------------------------------------------
# run


def test_run_assign():
    rec = run(Assign("x", Add(Const(2), Const(3))), {"x": 0}, 123)
    assert rec.final.vals["x"] == 5 and rec.final.now == 0
    assert rec.trace == (Internal(0.0),)
    assert rec.exit == TERMINATED


def test_run_fixed_repeat():
    p = Repeat(Assign("x", Add(Var("x"), Const(1))))
    rec = run(p, {"x": 0}, 0, RunConfig(repeat=RepeatPolicy("fixed", 3)))
    assert rec.final.vals["x"] == 3


def test_run_geometric_repeat_mean():
    p = Repeat(Assign("x", Add(Var("x"), Const(1))))
    cfg = RunConfig(repeat=RepeatPolicy("geometric", q=0.5))
    xs = np.array([run(p, {"x": 0}, 3, cfg, stream=(i,)).final.vals["x"] for i in range(10_000)])
    # P(N >= k) = q**k, so P(N = 0) = 1 - q and E N = q / (1 - q)
    band = hoeffding_band(10_000, DELTA)
    assert abs((xs == 0).mean() - 0.5) <= band
    assert abs(xs.mean() - 1.0) <= 0.05


def test_run_aircraft():
    p = load("aircraft.shcsp")
    rec = run(p, {"v": 1.0, "xs": 0.0, "xe": 5.0, "y0": 0.1}, 42)
    x = rec.final.vals["x"]
    assert rec.exit in (TERMINATED, TIMEOUT)
    assert x <= 5.0 + 1e-6 and x >= -1e-6


def test_aircraft_progresses_in_expectation():
    p = parse("x := 0.5; y := 0; {d[x, y] = v*[cos(theta), sin(theta)] dt + I2 dW & xs <= x & x <= xe}",)
    # inline theta via def
    p = parse("def theta = piecewise(y > 0: -pi/4, y < 0: pi/4, else: 0);" + str(p))
    cfg = RunConfig(dt=1e-2, t_max=1.0)
    init = {"v": 1.0, "xs": -100.0, "xe": 100.0}
    means = []
    for t in (0.25, 0.5, 1.0):
        vals = []
        for i in range(400):
            rec = run(p, init, 5, cfg, stream=(i,))
            vals.append(rec.flow.column("x")[rec.flow.index_at(t)])
        means.append(np.mean(vals))
    assert means[0] < means[1] < means[2]


def test_exit_kinds():
    assert run(parse("a!1"), {}, 0, RunConfig(dt=0.1, t_max=1)).exit == TIMEOUT
    assert run(parse("{d[s] = 0 dt & true}"), {"s": 0}, 0, RunConfig(dt=0.1, t_max=1)).exit == TIMEOUT
    # both sides wait for each other on different channels with nothing evolving
    rec = run(parse("a!1; b?x || b!2; a?y"), {}, 0, RunConfig(dt=0.1, t_max=1))
    assert rec.exit == DEADLOCK and rec.final.now == 0
    loop = parse("(skip)*")
    cfg = RunConfig(max_instant_steps=50, repeat=RepeatPolicy("fixed", 10_000))
    assert run(loop, {}, 0, cfg).exit == STEP_LIMIT


def test_zero_horizon():
    rec = run(parse("{d[s] = 1 dt + 1 dW & true}"), {"s": 0.0}, 0, RunConfig(dt=0.1, t_max=0))
    assert rec.exit == TIMEOUT and rec.final.now == 0


def test_division_by_zero_is_an_error():
    with pytest.raises(ExecutionError, match="division"):
        run(parse("x := 1/y"), {"y": 0.0}, 0)


def test_invalid_program_is_refused():
    with pytest.raises(ExecutionError, match="shared variable"):
        run(load("shared.shcsp"), {}, 0)


def test_unbound_variable_is_an_error():
    with pytest.raises(ExecutionError):
        run(parse("x := y + 1"), {}, 0)


def test_pingpong_trace():
    rec = run(load("pingpong.shcsp"), {}, 0, RunConfig(repeat=RepeatPolicy("fixed", 3)))
    comms = [(it.chan, it.value) for it in rec.trace if isinstance(it, Comm)]
    assert comms == [("ping", 0), ("pong", 1), ("ping", 1), ("pong", 2), ("ping", 2), ("pong", 3)]
    assert rec.final.vals["x"] == 3


def test_thermostat_samples_on_grid():
    rec = run(load("thermostat.shcsp"), {}, 1, RunConfig(dt=1e-2, t_max=5.5, repeat=RepeatPolicy("fixed", 100)))
    senses = [it.time for it in rec.trace if isinstance(it, Comm) and it.chan == "sense"]
    assert len(senses) == 5
    for k, t in enumerate(senses, start=1):
        assert abs(t - k) < 1e-6


# ---------------------------------------------------------------------------
# properties


PROGRAMS = {
    "aircraft": ("aircraft.shcsp", {"v": 1.0, "xs": 0.0, "xe": 5.0, "y0": 0.1}),
    "pingpong": ("pingpong.shcsp", {}),
    "interrupt": ("interrupt.shcsp", {"s": 1.0}),
    "thermostat": ("thermostat.shcsp", {}),
    "coin_loop": ("coin_loop.shcsp", {}),
    "contracting": ("contracting.shcsp", {"s0": 0.5}),
}
CFG = RunConfig(dt=1e-2, t_max=4.0, repeat=RepeatPolicy("fixed", 4))


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_trace_monotone(name):
    f, init = PROGRAMS[name]
    p = load(f)
    for seed in range(10):
        rec = run(p, init, seed, CFG)
        times = [it.time for it in rec.trace]
        assert times == sorted(times)
        assert np.all(np.diff(rec.flow.times) >= 0)
        if rec.trace:
            assert rec.final.now >= times[-1]


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_determinism(name):
    f, init = PROGRAMS[name]
    p = load(f)
    a = run(p, init, 99, CFG, stream=(3,))
    b = run(p, init, 99, CFG, stream=(3,))
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.flow.times, b.flow.times)
    assert np.array_equal(a.flow.values, b.flow.values, equal_nan=True)


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_sync_soundness(name):
    f, init = PROGRAMS[name]
    p = load(f)
    for seed in range(5):
        rec = run(p, init, seed, CFG)
        for it in rec.trace:
            if not isinstance(it, Comm):
                continue
            holders = [path for path, tr in rec.component_traces.items() if it in tr]
            assert len(holders) == 2, (it, holders)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 3))
def test_parallel_non_interference(seed, k):
    p = load("contracting.shcsp")
    q = parse("u := 0; {d[u] = 1 dt + 2 dW & u < 3}; (w := 1 |0.5| w := 2)")
    cfg = RunConfig(dt=1e-2, t_max=3.0)
    alone = run(p, {"s0": 0.7}, seed, cfg, stream=(k,))
    for sys_ in (Parallel(p, q), Parallel(q, p)):
        both = run(sys_, {"s0": 0.7}, seed, cfg, stream=(k,))
        # component streams are keyed by tree position; p sits at (0,) or (1,)
        path = (0,) if sys_.left is p else (1,)
        solo = run(p, {"s0": 0.7}, seed, cfg, stream=(k,) + path)
        assert both.final.vals["s"] == solo.final.vals["s"]
    assert math.isfinite(alone.final.vals["s"])


def test_pchoice_frequency_within_band():
    p = load("pchoice.shcsp")
    n = 4000
    hits = sum(run(p, {}, 77, stream=(i,)).final.vals["x"] == 1 for i in range(n))
    assert abs(hits / n - 0.25) <= hoeffding_band(n, DELTA)


def test_interrupt_three_way_weights():
    p = parse("{d[s] = 0 dt & true} |> [1: a?q -> {skip}, 2: b?q -> {skip}, 3: c?q -> {skip}]"
              " || (a!1 || (b!2 || c!3))")
    n = 3000
    counts = {"a": 0, "b": 0, "c": 0}
    for i in range(n):
        rec = run(p, {"s": 0.0}, 8, RunConfig(dt=0.1, t_max=1.0), stream=(i,))
        first = next(it for it in rec.trace if isinstance(it, Comm))
        counts[first.chan] += 1
    band = hoeffding_band(n, DELTA)
    for ch, w in (("a", 1), ("b", 2), ("c", 3)):
        assert abs(counts[ch] / n - w / 6) <= band


def test_run_record_json_shape():
    rec = run(load("pingpong.shcsp"), {}, 0)
    data = rec.to_json()
    assert set(data) == {"seed", "run", "exit", "final", "trace", "steps"}
    assert data["trace"][0] == {"kind": "tau", "time": 0.0}


def test_flow_last_snapshot_is_final_when_terminated():
    rec = run(load("contracting.shcsp"), {"s0": 0.5}, 4, RunConfig(dt=0.01, t_max=20))
    assert rec.exit == TERMINATED
    last = rec.flow.snapshot(len(rec.flow) - 1)
    assert dict(last.vals) == dict(rec.final.vals)
    assert last.tr == rec.final.tr == rec.trace


def test_flow_csv_header():
    rec = run(load("aircraft.shcsp"), {"v": 1.0, "xs": 0.0, "xe": 5.0, "y0": 0.1}, 0)
    text = rec.flow.to_csv()
    head = text.splitlines()[0].split(",")
    assert head[0] == "time" and {"x", "y"} <= set(head[1:])

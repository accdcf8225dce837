import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load
from shcsp import kernel
from shcsp.config import RunConfig
from shcsp.expr import Const, evaluate, evaluate_bool
from shcsp.parser import parse_block, parse_expr
from shcsp.rng import brownian_increment, stream
from shcsp.sde import BOUNDARY, INTERRUPTED, TIMEOUT, IntegrationError, Integrator, em_step, evolve
from shcsp.syntax import sde_blocks
from shcsp.trace import ProcState

BACKENDS = kernel.available_backends()


# ---------------------------------------------------------------------------
# brownian_increment


def test_increment_shape():
    dw = brownian_increment(2, 0.01, stream(0))
    assert dw.shape == (2,)


def test_increment_moments():
    rng = stream(1)
    x = np.array([brownian_increment(1, 0.25, rng)[0] for _ in range(100_000)])
    assert abs(x.mean()) <= 0.01
    assert abs(x.var() - 0.25) <= 0.01


def test_increments_uncorrelated():
    rng = stream(2)
    pairs = np.array([(brownian_increment(1, 1.0, rng)[0], brownian_increment(1, 1.0, rng)[0])
                      for _ in range(100_000)])
    assert abs(np.cov(pairs, rowvar=False)[0, 1]) <= 0.01


def test_increment_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        brownian_increment(1, 0.0, stream(0))


# ---------------------------------------------------------------------------
# em_step


def test_em_step_deterministic():
    out = em_step([0.0], [Const(1)], [[Const(0)]], {}, 0.01, [0.3], vars=("s",))
    assert out.tolist() == [0.01]


def test_em_step_pure_diffusion():
    out = em_step([1.0, 2.0], [Const(0), Const(0)], [[Const(1), Const(0)], [Const(0), Const(1)]], {},
                  0.01, [0.5, -0.2], vars=("a", "b"))
    assert out.tolist() == [1.5, 1.8]


def test_aircraft_drift_above_lane():
    blk = sde_blocks(load("aircraft.shcsp"))[0]
    env = {"x": 1.0, "y": 0.3, "v": 2.0}
    b = [evaluate(e, env) for e in blk.drift]
    assert b == pytest.approx([2 * math.sqrt(2) / 2, -2 * math.sqrt(2) / 2], abs=1e-15)
    out = em_step([1.0, 0.3], blk.drift, blk.diffusion, {"v": 2.0}, 0.1, [0.0, 0.0], vars=blk.vars)
    assert out == pytest.approx([1.0 + 0.1 * math.sqrt(2), 0.3 - 0.1 * math.sqrt(2)], abs=1e-15)


# ---------------------------------------------------------------------------
# evolve


def _entry(**vals):
    return ProcState(vals, 0.0)


def test_evolve_constant_times_out():
    blk = parse_block("{d[s] = 0 dt + 0 dW & s < 1}")
    path = evolve(blk, _entry(s=0.0), RunConfig(dt=0.01, t_max=2.0), stream(0))
    assert path.exit == TIMEOUT and path.exit_time == 2.0
    assert np.all(path.states == 0.0)


def test_evolve_ode_boundary():
    blk = parse_block("{d[s] = 1 dt + 0 dW & s < 1}")
    cfg = RunConfig(dt=1e-3, t_max=5.0)
    path = evolve(blk, _entry(s=0.0), cfg, stream(0))
    assert path.exit == BOUNDARY
    assert abs(path.exit_time - 1.0) <= 1e-6


def test_evolve_entry_outside_domain_exits_at_once():
    blk = parse_block("{d[s] = 1 dt & s < 1}")
    path = evolve(blk, _entry(s=2.0), RunConfig(dt=0.1, t_max=1.0), stream(0))
    assert path.exit == BOUNDARY and path.exit_time == 0.0 and len(path.times) == 1


def test_evolve_poll_interrupts_on_grid():
    blk = parse_block("{d[s] = 1 dt & s < 10}")
    path = evolve(blk, _entry(s=0.0), RunConfig(dt=0.1, t_max=5.0), stream(0), poll=lambda t, s: s[0] >= 0.5)
    assert path.exit == INTERRUPTED
    assert path.exit_time == pytest.approx(0.5)
    assert path.times[-1] == path.exit_time


def test_aircraft_exits_through_xe():
    blk = sde_blocks(load("aircraft.shcsp"))[0]
    cfg = RunConfig(dt=1e-3, t_max=50.0)
    path = evolve(blk, _entry(x=0.5, y=0.0, v=1.0, xs=0.0, xe=5.0), cfg, stream(4))
    assert path.exit == BOUNDARY
    x = path.exit_state[0]
    assert abs(x - 5.0) < 1e-6 or abs(x) < 1e-6


def test_path_gaps_at_most_dt():
    blk = parse_block("{d[s] = -s dt + 1 dW & s < 3}")
    cfg = RunConfig(dt=0.01, t_max=3.0)
    path = evolve(blk, _entry(s=0.0), cfg, stream(5))
    gaps = np.diff(path.times)
    assert np.all(gaps > 0) and np.all(gaps <= cfg.dt * (1 + 1e-12))
    assert path.times[0] == 0.0


def _reference_euler(b, s0, dt, n):
    out = [s0]
    s = s0
    for _ in range(n):
        s = s + b(s) * dt
        out.append(s)
    return np.array(out)


@pytest.mark.parametrize("backend", BACKENDS)
def test_degenerate_matches_reference_euler(backend):
    blk = parse_block("{d[s] = -s + 0.5*sin(s) dt + 0 dW & s < 100}")
    dt = 0.01
    cfg = RunConfig(dt=dt, t_max=2.0)
    path = evolve(blk, _entry(s=1.5), cfg, stream(6), backend=backend)
    ref = _reference_euler(lambda s: -s + 0.5 * math.sin(s), 1.5, dt, len(path.times) - 1)
    assert np.array_equal(path.states[:, 0], ref)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3), st.sampled_from([1e-3, 1e-2, 0.05]))
def test_degenerate_matches_analytic(c, dt):
    blk = parse_block(f"{{d[s] = {c!r} dt + 0 dW & true}}")
    path = evolve(blk, _entry(s=0.0), RunConfig(dt=dt, t_max=2.0), stream(0))
    err = np.abs(path.states[:, 0] - c * path.times)
    assert np.all(err <= 10 * dt * abs(c) * np.maximum(path.times, dt))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.5, 3.0), st.sampled_from([1.0, 10.0, 100.0]))
def test_boundary_refinement_tolerance(rate, level, t_max):
    blk = parse_block(f"{{d[s] = {rate!r} dt + 0.3 dW & s < {level!r}}}")
    cfg = RunConfig(dt=0.01, t_max=t_max)
    integ = Integrator(blk, {"s": 0.0}, 0.0, stream(3), cfg)
    integ.advance_all()
    kind, t_star, _ = integ.exit
    if kind != BOUNDARY:
        return
    tol = 1e-9 * max(1.0, t_max)
    assert cfg.tol == tol
    before = integ.state_at(t_star - tol)
    after_t = t_star + tol
    # the path ends at t_star; continue the last interpolated segment past it
    i = integ.n - 1
    w = (after_t - integ.times[i - 1]) / (t_star - integ.times[i - 1])
    after = integ.states[i - 1] + w * (integ.states[i] - integ.states[i - 1])
    assert evaluate_bool(blk.domain, {"s": float(before[0])})
    assert not evaluate_bool(blk.domain, {"s": float(after[0])})


def test_brownian_variance_at_one():
    blk = parse_block("{d[s] = 0 dt + 1 dW & true}")
    cfg = RunConfig(dt=0.01, t_max=1.0)
    ends = np.array([evolve(blk, _entry(s=0.0), cfg, stream(9, (i,))).exit_state[0] for i in range(10_000)])
    assert abs(ends.var(ddof=1) - 1.0) <= 0.05


def test_non_finite_state_is_an_error():
    blk = parse_block("{d[s] = s*s dt & true}")
    with pytest.raises(IntegrationError, match="non-finite"):
        evolve(blk, _entry(s=1.0), RunConfig(dt=0.1, t_max=100.0), stream(0))


def test_coefficient_failure_is_an_error():
    blk = parse_block("{d[s] = 1/(s - 0.5) dt & true}")
    with pytest.raises(IntegrationError):
        evolve(blk, _entry(s=0.5), RunConfig(dt=0.1, t_max=1.0), stream(0))


def test_sqrt_of_negative_is_an_error():
    blk = parse_block("{d[s] = sqrt(s) dt + 1 dW & true}")
    with pytest.raises(IntegrationError):
        evolve(blk, _entry(s=-1.0), RunConfig(dt=0.1, t_max=1.0), stream(0))


def test_path_csv_header():
    blk = parse_block("{d[s, u] = [1, 0] dt & s < 0.05}")
    path = evolve(blk, _entry(s=0.0, u=0.0), RunConfig(dt=0.01, t_max=1.0), stream(0))
    text = path.to_csv()
    assert text.startswith("time,s,u\n")
    assert len(text.splitlines()) == len(path.times) + 1


# ---------------------------------------------------------------------------
# backends


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")
@pytest.mark.parametrize("src, init", [
    ("{d[s] = -s dt + s dW & s > 0.01}", {"s": 1.0}),
    ("{d[x, y] = v*[cos(theta), sin(theta)] dt + I2 dW & xs <= x & x <= xe}",
     {"x": 0.2, "y": 0.1, "v": 1.0, "xs": 0.0, "xe": 5.0}),
    ("{d[a, b] = [b, -a - 0.1*b] dt + [[0.2, 0], [0.1, exp(-a*a)]] dW & a*a + b*b < 9}",
     {"a": 1.0, "b": 0.0}),
])
def test_backends_bit_identical(src, init):
    defs = {"theta": parse_expr("piecewise(y > 0: -pi/4, y < 0: pi/4, else: 0)")}
    blk = parse_block(src, defs)
    cfg = RunConfig(dt=1e-3, t_max=5.0)
    paths = [evolve(blk, ProcState(init), cfg, stream(12), backend=b) for b in ("cython", "python")]
    assert paths[0].exit == paths[1].exit
    assert np.array_equal(paths[0].times, paths[1].times)
    assert np.array_equal(paths[0].states, paths[1].states)


def test_default_backend_is_available():
    assert kernel.default_backend() in BACKENDS
    assert "python" in BACKENDS


def test_unbound_parameter_is_reported():
    blk = parse_block("{d[s] = k dt & true}")
    with pytest.raises(Exception, match="k"):
        evolve(blk, _entry(s=0.0), RunConfig(dt=0.1, t_max=1.0), stream(0))

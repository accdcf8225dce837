import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORPUS, REQUESTS, load
from shcsp.assertions import estimate_prob, hoeffding_band, parse_formula
from shcsp.cert import (
    CERTIFIED, GRID_LABEL, PARTIAL, REJECTED, UNSUPPORTED, CertificateRequest, CompositionError, HoareBound,
    RequestError, assign_triple, chain_seq, check_sde_rule, check_sign, combine_cond, combine_pchoice,
    entails, sde_bound, skip_triple,
)
from shcsp.config import RunConfig
from shcsp.execution import run
from shcsp.expr import EvaluationError, evaluate
from shcsp.parser import parse, parse_block, parse_bool, parse_expr
from shcsp.syntax import Sde, Seq, Skip, sde_blocks

AIRCRAFT = sde_blocks(load("aircraft.shcsp"))[0]
THETA = {"theta": parse_expr("piecewise(y > 0: -pi/4, y < 0: pi/4, else: 0)")}


def req(name, **changes):
    data = json.loads((REQUESTS / f"{name}.json").read_text())
    data.update(changes)
    return CertificateRequest.from_json(data, REQUESTS)


# ---------------------------------------------------------------------------
# check_sign


def test_square_is_nonnegative():
    r = check_sign(parse_expr("y*y"), "nonneg", parse_bool("true"), {"y": (-3, 3)}, 61)
    assert r.passes and r.checked == 61 and r.label == GRID_LABEL


def test_aircraft_square_generator_fails_near_the_lane():
    e = parse_expr("2*v*y*sin(theta) + 1", THETA)
    r = check_sign(e, "nonpos", parse_bool("y > 0"), {"y": (0, 1)}, 101, {"v": 1.0})
    assert not r.passes
    # first violating point in grid order is the smallest positive y
    assert r.point == {"y": 0.01} and r.value == pytest.approx(1 - 2 * 0.01 * math.sqrt(2) / 2)


def test_abs_generator_on_the_upper_half():
    e = parse_expr("-sqrt(2)/2*v")
    r = check_sign(e, "nonpos", parse_bool("y > 0"), {"y": (0, 1)}, 11, {"v": 2.0})
    assert r.passes and r.checked == 10


def test_zero_counts_for_both_signs():
    for sign in ("nonneg", "nonpos"):
        assert check_sign(parse_expr("s - s"), sign, parse_bool("true"), {"s": (-1, 1)}, 5).passes


def test_sign_exclusion_and_errors():
    B = parse_bool("true")
    assert not check_sign(parse_expr("-abs(y)"), "nonneg", B, {"y": (-1, 1)}, 3).passes
    assert check_sign(parse_expr("-abs(y)"), "nonneg", B, {"y": (0, 0)}, 3).passes
    assert check_sign(parse_expr("1/y"), "nonneg", parse_bool("y > 0"), {"y": (0, 1)}, 5).passes
    with pytest.raises(EvaluationError):
        check_sign(parse_expr("sqrt(y)"), "nonneg", B, {"y": (-1, 1)}, 5)
    with pytest.raises(ValueError):
        check_sign(parse_expr("y"), "positive", B, {"y": (0, 1)}, 5)


def test_sign_over_two_axes_finds_the_point():
    e = parse_expr("x - y")
    r = check_sign(e, "nonneg", parse_bool("true"), {"x": (0, 1), "y": (0, 1)}, 3)
    assert not r.passes and evaluate(e, r.point) < 0


# ---------------------------------------------------------------------------
# check_sde_rule


def test_decay_is_certified():
    res = check_sde_rule(req("decay"))
    assert res.verdict == CERTIFIED and res.bound == Fraction(1, 100)
    assert res.lie == "-2*s*s"
    assert all(p.passed for p in res.premises)
    assert res.smoothness == "smooth"


def test_decay_with_small_p_fails_initially():
    res = check_sde_rule(req("decay_tight"))
    assert (res.verdict, res.premise) == (REJECTED, "initial")
    assert res.bound == Fraction(1, 100)


def test_aircraft_abs_is_partial():
    res = check_sde_rule(req("aircraft_abs"))
    assert res.verdict == PARTIAL and res.smoothness == "non-C2-detected"
    assert res.singular == ["y = 0"]
    assert res.bound == Fraction(1, 5000) <= Fraction("0.0002")
    assert "singular" in res.premises[-1].method


def test_aircraft_square_is_rejected_with_witness():
    res = check_sde_rule(req("aircraft_square"))
    assert (res.verdict, res.premise) == (REJECTED, "Lf-nonpos")
    bad = res.premises[-1]
    lie = parse_expr(res.lie, THETA)
    assert evaluate(lie, {**bad.witness, "v": 1.0}) > 0


def test_start_outside_domain_is_rejected():
    res = check_sde_rule(req("decay", init={"s": "0.001"}))
    assert (res.verdict, res.premise) == (REJECTED, "initial")
    assert res.premises[-1].name == "s0 in B"


def test_non_smooth_everywhere_is_unsupported():
    res = check_sde_rule(req("decay", f="max(s, 0)"))
    assert res.verdict == UNSUPPORTED and "max" in res.reason


def test_request_errors():
    with pytest.raises(RequestError):
        req("decay", lam="0")
    with pytest.raises(RequestError):
        req("decay", box={"u": ["0", "1"]})
    with pytest.raises(RequestError):
        req("decay", f="s*k")
    with pytest.raises(RequestError):
        req("decay", p="x")


def test_float_inputs_fall_back_to_binary64():
    res = check_sde_rule(req("decay", f="exp(s) - 1", p="0.2"))
    assert res.premises[1].method == "binary64 arithmetic"


def test_result_json_and_report():
    res = check_sde_rule(req("decay"))
    out = res.to_json()
    assert out["bound_exact"] == "1/100" and out["bound"] == 0.01
    assert out["exit_closure"] == "s >= 0.01"
    assert "implied bound f(s0)/lam = 1/100" in res.report()


@pytest.mark.parametrize("path", sorted(REQUESTS.glob("*.json")), ids=lambda p: p.stem)
def test_certified_results_are_consistent(path):
    r = CertificateRequest.load(path)
    res = check_sde_rule(r)
    if res.verdict in (CERTIFIED, PARTIAL):
        assert all(p.passed for p in res.premises[1:])
        assert res.bound <= r.p
    if res.verdict == REJECTED:
        assert not res.premises[-1].passed


def test_decay_doob_consistency():
    r = req("decay")
    res = check_sde_rule(r)
    program = Seq(parse("s := s0"), Sde(r.block))
    est = estimate_prob(parse_formula("in(s*s >= 1, 0, end)"), program, {"s0": 0.1}, 10_000,
                        0.01, RunConfig(dt=0.01, t_max=10.0), seed=3)
    assert est.phat <= float(res.bound) + hoeffding_band(est.n, 0.01)


# ---------------------------------------------------------------------------
# the aircraft example from an interior start


AIRCRAFT_INIT = {"v": 1.0, "xs": 0.0, "xe": 5.0, "y0": 0.1}


def test_most_aircraft_runs_leave_through_xs_at_once():
    # x starts on the boundary x = xs and carries noise, so most runs
    # leave the domain within a few steps
    program = load("aircraft.shcsp")
    cfg = RunConfig(dt=1e-3, t_max=10.0)
    ends = np.array([run(program, AIRCRAFT_INIT, 5, cfg, stream=(i,)).final.now for i in range(1000)])
    assert 0.75 <= np.mean(ends <= 0.01) <= 0.9


def test_abs_certificate_does_not_bound_an_interior_start():
    # with x starting inside the lane the reflected drift at y = 0 adds a
    # local-time term that |y| does not account for: the estimated risk is
    # far above p even though the partial certificate's initial premise holds
    src = (CORPUS / "aircraft.shcsp").read_text().replace("x := xs;", "x := xs + 0.5;")
    program = parse(src)
    est = estimate_prob(parse_formula("in(abs(y) >= 1, 0, end)"), program, AIRCRAFT_INIT, 1000, 0.01,
                        RunConfig(dt=1e-3, t_max=10.0), seed=5)
    assert est.lo > 0.1
    res = check_sde_rule(req("aircraft_abs", init={"x": "1/2", "y": "1/10", "v": "1", "xs": "0", "xe": "5"},
                             p="0.1"))
    assert res.verdict == PARTIAL


# ---------------------------------------------------------------------------
# bound propagation

S = parse_bool("s >= 1")


def hb(bound, pred=S, op="<=", pre="true", post="true"):
    return HoareBound(Skip(), parse_bool(pre), parse_bool(post), pred, op, bound)


def test_pchoice_examples():
    assert combine_pchoice(hb("0.2"), hb("0.4"), "1/2").bound == Fraction(3, 10)
    assert combine_pchoice(hb("0.3"), hb("0.9"), 1).bound == Fraction(3, 10)
    assert combine_pchoice(hb(0), hb(0), "0.25").bound == 0


def test_pchoice_mismatch():
    with pytest.raises(CompositionError):
        combine_pchoice(hb("0.2"), hb("0.2", pred=parse_bool("s >= 2")), "0.5")
    with pytest.raises(CompositionError):
        combine_pchoice(hb("0.2"), hb("0.2", op=">="), "0.5")
    with pytest.raises(ValueError):
        combine_pchoice(hb("0.2"), hb("0.2"), 2)


fracs = st.fractions(0, 1, max_denominator=50)


@settings(max_examples=200, deadline=None)
@given(fracs, fracs, fracs, fracs)
def test_pchoice_is_monotone_and_between(a, b, c, p):
    out = combine_pchoice(hb(a), hb(b), p).bound
    assert min(a, b) <= out <= max(a, b)
    if c >= a:
        assert combine_pchoice(hb(c), hb(b), p).bound >= out


def _decay_q():
    r = req("decay")
    return r, sde_bound(r, check_sde_rule(r), pre=parse_bool("s <= 0.1"))


def test_skip_before_certified_block():
    _, q = _decay_q()
    out = chain_seq(skip_triple(q.pre), q)
    assert out.bound == q.bound == Fraction(1, 100) and out.predicate == q.predicate
    assert out.provenance[0] == "seq"


def test_assign_before_certified_block():
    _, q = _decay_q()
    a = assign_triple("s", parse_expr("0.1"), q.pre)
    assert a.pre == parse_bool("0.1 <= 0.1")
    out = chain_seq(a, q)
    assert out.bound == q.bound and isinstance(out.statement, Seq)


def test_refused_composition():
    _, q = _decay_q()
    with pytest.raises(CompositionError):
        chain_seq(skip_triple(parse_bool("s <= 1")), q)
    with pytest.raises(CompositionError):
        sde_bound(req("decay_tight"), check_sde_rule(req("decay_tight")))


def test_cond_takes_the_weaker_bound():
    g = parse_bool("x > 0")
    assert combine_cond(g, hb("0.2"), hb("0.5")).bound == Fraction(1, 2)
    assert combine_cond(g, hb("0.2", op=">="), hb("0.5", op=">=")).bound == Fraction(1, 5)


def test_entailment():
    assert entails(parse_bool("s <= 0.05"), parse_bool("s <= 0.1"))
    assert entails(parse_bool("s = 0.1 & x > 2"), parse_bool("s <= 0.1 & x >= 2"))
    assert not entails(parse_bool("s < 0.2"), parse_bool("s <= 0.1"))
    assert not entails(parse_bool("x*x <= 1"), parse_bool("x <= 1"))
    assert entails(parse_bool("false"), parse_bool("s > 9"))


def test_bound_range_is_checked():
    with pytest.raises(ValueError):
        hb("1.5")


def test_request_from_block_and_program_agree():
    a = req("aircraft_abs")
    text = "def theta = piecewise(y > 0: -pi/4, y < 0: pi/4, else: 0);\n" \
           "{d[x, y] = v*[cos(theta), sin(theta)] dt + I2 dW & xs <= x & x <= xe}"
    b = parse_block(text)
    assert a.block == b == AIRCRAFT

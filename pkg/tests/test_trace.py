import pytest
from hypothesis import given, settings, strategies as st

from oracles import merge_oracle
from shcsp.trace import (
    Comm, Internal, NotParallelable, ProcState, ReadyItem, is_sorted, merge_states, merge_traces, project,
)


def c(ch, v, t):
    return Comm(ch, float(v), float(t))


def test_merge_examples():
    assert merge_traces((), (), ()) == {()}
    assert merge_traces((c("a", 1, 1),), (c("a", 1, 1),), {"a"}) == {(c("a", 1, 1),)}
    assert merge_traces((c("a", 1, 1),), (c("a", 2, 1),), {"a"}) == set()


def test_merge_interleaves_private_channels():
    got = merge_traces((c("a", 1, 1),), (c("b", 1, 1),))
    assert got == {(c("a", 1, 1), c("b", 1, 1)), (c("b", 1, 1), c("a", 1, 1))}
    # a later item cannot move before an earlier one
    assert merge_traces((c("a", 1, 0),), (c("b", 1, 1),)) == {(c("a", 1, 0), c("b", 1, 1))}


def test_internal_items_are_never_identified():
    got = merge_traces((Internal(0.0),), (Internal(0.0),))
    assert got == {(Internal(0.0), Internal(0.0))}


def test_sync_channel_of_one_side_blocks():
    assert merge_traces((c("a", 1, 0),), (), {"a"}) == set()
    assert merge_traces((c("a", 1, 0),), ()) == {(c("a", 1, 0),)}


items = st.one_of(
    st.builds(Comm, st.sampled_from("abc"), st.sampled_from([1.0, 2.0]), st.sampled_from([0.0, 1.0, 2.0])),
    st.builds(Internal, st.sampled_from([0.0, 1.0, 2.0])),
)
traces = st.lists(items, max_size=4).map(lambda xs: tuple(sorted(xs, key=lambda it: it.time)))


@settings(max_examples=400, deadline=None)
@given(traces, traces, st.sampled_from([(), ("a",), ("a", "b")]))
def test_merge_matches_oracle_each_side_up_to_four(t1, t2, sync):
    assert merge_traces(t1, t2, sync) == merge_oracle(t1, t2, sync)


@settings(max_examples=300, deadline=None)
@given(traces, traces)
def test_merged_traces_are_sorted_and_project_back(t1, t2):
    c1 = {it.chan for it in t1 if isinstance(it, Comm)}
    c2 = {it.chan for it in t2 if isinstance(it, Comm)}
    for m in merge_traces(t1, t2):
        assert is_sorted(m)
        assert project(m, c1) == project(t1, c1)
        assert project(m, c2) == project(t2, c2)
        assert sum(isinstance(it, Internal) for it in m) == sum(
            isinstance(it, Internal) for it in t1 + t2)


@settings(max_examples=200, deadline=None)
@given(traces, traces)
def test_merge_is_symmetric(t1, t2):
    assert merge_traces(t1, t2) == merge_traces(t2, t1)


# ---------------------------------------------------------------------------
# merge_states


def test_merge_states_examples():
    r = merge_states(ProcState({"a": 1}), ProcState({"b": 2}))
    assert dict(r.vals) == {"a": 1, "b": 2} and r.tr == () and r.now == 0

    s1 = ProcState({}, 1.0, (c("ch", 1, 1),))
    s2 = ProcState({}, 1.0, (c("ch", 1, 1),))
    assert merge_states(s1, s2, {"ch"}).tr == (c("ch", 1, 1),)

    ra, rb = ReadyItem("a", "?", 0), ReadyItem("b", "!", 0)
    r = merge_states(ProcState({}, rdy={ra}), ProcState({}, rdy={rb}))
    assert r.rdy == {ra, rb}


def test_merge_states_preconditions():
    with pytest.raises(NotParallelable):
        merge_states(ProcState({"x": 1}), ProcState({"x": 2}))
    with pytest.raises(NotParallelable):
        merge_states(ProcState({}, 0.0), ProcState({}, 1.0))
    with pytest.raises(NotParallelable):
        merge_states(ProcState({}, 1.0, (c("a", 1, 1),)), ProcState({}, 1.0, (c("a", 2, 1),)))


def test_procstate_rejects_bad_time():
    with pytest.raises(ValueError):
        Comm("a", 1.0, -1.0)
    with pytest.raises(ValueError):
        Internal(float("inf"))
    with pytest.raises(ValueError):
        ProcState({}, -0.5)


def test_ready_item_counts_prefix():
    prefix = (c("a", 1, 0), Internal(0.0), c("b", 1, 0), c("a", 2, 1))
    assert ReadyItem.at("a", "?", prefix) == ReadyItem("a", "?", 2)
    assert ReadyItem("a", "?", 2).dual() == ReadyItem("a", "!", 2)

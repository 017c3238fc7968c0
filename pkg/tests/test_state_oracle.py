"""
Tests for the deque-state rules, trace validation and trace files.
"""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from core.errors import TraceParseError, TransitionError, UsageError
from core.state_oracle import (
    AuthState,
    Snapshot,
    TraceRecord,
    TransitionKind,
    read_trace,
    snapshot_valid,
    states_from_records,
    tbs,
    transition_check,
    validate_trace,
    write_trace,
)


def S(contents, t, b, era=0, arr=1):
    return AuthState(era, arr, tuple(contents), t, b)


# ── tbs ──────────────────────────────────────────────────────────────────────

def test_tbs_values():
    assert tbs(1, 1) == 2
    assert tbs(1, 2) == 3
    assert tbs(3, 5) == 7
    assert tbs(3, 3) == 6


def test_tbs_rejects_inverted():
    with pytest.raises(UsageError):
        tbs(3, 2)


def test_tbs_order_law():
    pairs = [(t, b) for t in range(1, 13) for b in range(t, 13)]
    for (t1, b1), (t2, b2) in itertools.product(pairs, repeat=2):
        law = t1 <= t2 and (not (t1 == t2 and t1 < b1) or t2 < b2)
        assert (tbs(t1, b1) <= tbs(t2, b2)) == law, (t1, b1, t2, b2)


# ── snapshots ────────────────────────────────────────────────────────────────

def test_snapshot_valid_examples():
    older = Snapshot(0, 1, 2, 3, 9)
    assert snapshot_valid(older, Snapshot(0, 1, 2, 3, 9))
    assert not snapshot_valid(older, Snapshot(0, 1, 2, 2, None))
    assert snapshot_valid(older, Snapshot(0, 1, 3, 3, None))
    assert not snapshot_valid(older, Snapshot(0, 1, 2, 3, 8))
    assert not snapshot_valid(Snapshot(0, 1, 3, 3, None), S([0, 0], 2, 2))


def test_auth_state_helpers():
    s = AuthState.initial(2)
    assert (s.top, s.bottom, s.contents) == (1, 1, (0, 0))
    s2 = S([0, 5, 4, 0], 1, 3)
    assert s2.items() == [5, 4]
    assert s2.snapshot().top_elem == 5
    with pytest.raises(TransitionError):
        S([4, 5], 1, 4).check()
    with pytest.raises(UsageError):
        AuthState.initial(0)


# ── transitions ──────────────────────────────────────────────────────────────

def test_push_rule():
    assert transition_check(S([0, 0], 1, 1), S([0, 0], 1, 2)) is TransitionKind.PUSH


def test_push_needs_room():
    with pytest.raises(TransitionError):
        transition_check(S([1, 2], 1, 2), S([1, 2], 1, 3))


def test_cas_top_rule():
    assert transition_check(S([0, 7], 1, 2), S([0, 7], 2, 2)) is TransitionKind.CAS_TOP


def test_cas_top_on_empty_rejected():
    with pytest.raises(TransitionError):
        transition_check(S([0, 0], 1, 1), S([0, 0], 2, 2))


def test_pop_rule():
    assert transition_check(S([0, 1, 2, 0], 1, 3), S([0, 1, 2, 0], 1, 2)) is TransitionKind.POP
    with pytest.raises(TransitionError, match="pop"):
        transition_check(S([0, 1], 1, 2), S([0, 1], 1, 1))


def test_write_rule():
    assert transition_check(S([0, 0], 1, 1), S([0, 5], 1, 1)) is TransitionKind.WRITE_ARRAY
    with pytest.raises(TransitionError, match="write-array"):
        transition_check(S([0, 0], 1, 1), S([5, 0], 1, 1))


def test_archive_rule():
    prev = S([0, 7], 1, 2)
    grown = S([0, 7, 0, 0], 1, 2, era=1, arr=2)
    assert transition_check(prev, grown) is TransitionKind.ARCHIVE
    with pytest.raises(TransitionError, match="archive"):
        transition_check(prev, S([0, 8, 0, 0], 1, 2, era=1, arr=2))
    with pytest.raises(TransitionError, match="archive"):
        transition_check(prev, S([0, 7, 0, 0], 1, 2, era=0, arr=2))


def test_top_monotonicity():
    with pytest.raises(TransitionError, match="top monotonicity"):
        transition_check(S([0, 0], 2, 2), S([0, 0], 1, 2))


def test_bottom_jump_rejected():
    with pytest.raises(TransitionError):
        transition_check(S([0, 0, 0, 0], 1, 1), S([0, 0, 0, 0], 1, 3))


def test_frame_rule():
    with pytest.raises(TransitionError, match="frame"):
        transition_check(S([0, 0], 1, 1), S([0, 3], 1, 2))


def _states(capacity, values=(0, 1, 2)):
    """Every well-formed state over ``capacity`` slots with t < 5."""
    for t in range(1, 5):
        for b in range(t, t + capacity):
            for contents in itertools.product(values, repeat=capacity):
                yield S(contents, t, b, era=capacity, arr=capacity)


def test_write_at_bottom_keeps_top_element():
    for n in range(1, 5):
        for prev in _states(n):
            for v in (1, 2, 3):
                slots = list(prev.contents)
                slots[prev.bottom % n] = v
                nxt = S(slots, prev.top, prev.bottom, era=n, arr=n)
                assert transition_check(prev, nxt) is TransitionKind.WRITE_ARRAY
                if prev.top < prev.bottom:
                    assert nxt.snapshot().top_elem == prev.snapshot().top_elem, (prev, v)


def test_every_rule_keeps_tbs_ordered():
    states = [s for n in (1, 2, 3) for s in _states(n, values=(0, 1))]
    seen = set()
    for prev, nxt in itertools.product(states, repeat=2):
        try:
            kind = transition_check(prev, nxt)
        except TransitionError:
            continue
        seen.add(kind)
        assert tbs(prev.top, prev.bottom) <= tbs(nxt.top, nxt.bottom), (prev, nxt, kind)
    assert seen == set(TransitionKind)


def _successors(s):
    t, b, n = s.top, s.bottom, s.capacity
    for v in (1, 2, 3):
        slots = list(s.contents)
        slots[b % n] = v
        yield S(slots, t, b, s.era, s.array_id)
    yield S(s.contents, t, b + 1, s.era, s.array_id)
    yield S(s.contents, t, b - 1, s.era, s.array_id)
    yield S(s.contents, t + 1, b, s.era, s.array_id)
    grown = [0] * (2 * n)
    for i in range(t, b):
        grown[i % (2 * n)] = s.at(i)
    yield S(grown, t, b, s.era + 1, s.array_id + 1)


def _legal(prev, nxt):
    try:
        transition_check(prev, nxt)
    except TransitionError:
        return False
    return True


@settings(max_examples=200)
@given(st.lists(st.integers(0, 7), max_size=25), st.integers(1, 3))
def test_snapshot_validity_along_legal_traces(choices, capacity):
    trace = [AuthState.initial(capacity)]
    for c in choices:
        options = [s for s in _successors(trace[-1]) if s.capacity <= 16 and _legal(trace[-1], s)]
        trace.append(options[c % len(options)])
    assert validate_trace(trace).passed

    snaps = [s.snapshot() for s in trace]
    for snap, state in zip(snaps, trace):
        assert snapshot_valid(snap, snap)
        assert snapshot_valid(snap, state)
    for i, j, k in itertools.combinations(range(len(snaps)), 3):
        if snapshot_valid(snaps[i], snaps[j]) and snapshot_valid(snaps[j], snaps[k]):
            assert snapshot_valid(snaps[i], snaps[k])
    # along a legal trace every earlier snapshot stays valid
    for i, j in itertools.combinations(range(len(snaps)), 2):
        assert snapshot_valid(snaps[i], snaps[j]), (i, j)


# ── traces ───────────────────────────────────────────────────────────────────

def test_validate_small_trace():
    trace = [
        S([0, 0], 1, 1),
        S([0, 4], 1, 1),
        S([0, 4], 1, 2),
        S([0, 4, 0, 0], 1, 2, era=1, arr=2),
        S([0, 4, 6, 0], 1, 2, era=1, arr=2),
        S([0, 4, 6, 0], 1, 3, era=1, arr=2),
        S([0, 4, 6, 0], 2, 3, era=1, arr=2),
    ]
    report = validate_trace(trace)
    assert report.passed, report.violation
    assert report.kinds[-1] is TransitionKind.CAS_TOP
    assert list(report.archive) == [0]
    assert report.to_json()["eras"] == [0]


def test_validate_reports_failing_index():
    report = validate_trace([S([0, 0, 0, 0], 1, 1), S([0, 0, 0, 0], 1, 3)])
    assert not report.passed
    assert report.failed_at == 1


def test_validate_needs_fresh_start():
    assert not validate_trace([S([0, 0], 2, 2)]).passed


def test_validate_rejects_empty():
    with pytest.raises(UsageError):
        validate_trace([])


def test_validate_era_agreement():
    trace = [
        S([0, 0], 1, 1),
        S([0, 0, 0, 0], 1, 1, era=1, arr=2),
        S([0, 0, 0, 0, 0, 0, 0, 0], 1, 1, era=2, arr=1),
    ]
    report = validate_trace(trace)
    assert not report.passed
    assert "reused" in report.violation


# ── trace files ──────────────────────────────────────────────────────────────

def _records():
    return [
        TraceRecord(0, 0, 1, 2, 1, 1, None, "alloc"),
        TraceRecord(1, 0, 1, 2, 1, 1, (1, 4), "write"),
        TraceRecord(2, 0, 1, 2, 1, 2, None, "push"),
        TraceRecord(3, 1, 2, 4, 1, 2, None, "archive"),
        TraceRecord(4, 1, 2, 4, 2, 2, None, "cas_top"),
    ]


def test_states_from_records_carries_slice():
    states = states_from_records(_records())
    assert states[3].contents == (0, 4, 0, 0)
    assert validate_trace(states).passed


def test_trace_file_roundtrip(tmp_path):
    path = tmp_path / "t.jsonl"
    write_trace(path, _records())
    assert read_trace(path) == _records()


def test_trace_file_errors(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(TraceParseError) as err:
        read_trace(empty)
    assert err.value.index == 0

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"seq":0,"era":0,"arr":1,"cap":2,"top":1,"bot":1}\n{"seq":1,"era":0}\n')
    with pytest.raises(TraceParseError) as err:
        read_trace(bad)
    assert err.value.index == 1

    order = tmp_path / "order.jsonl"
    line = '{"seq":3,"era":0,"arr":1,"cap":2,"top":1,"bot":1}\n'
    order.write_text(line + line)
    with pytest.raises(TraceParseError):
        read_trace(order)

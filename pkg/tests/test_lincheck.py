"""
Tests for the linearizability checker and history recording.
"""

import itertools
import random

import pytest

from core.errors import HistoryError, LinearizabilityBoundError
from core.lincheck import (
    ILLEGAL,
    Event,
    History,
    HistoryRecorder,
    OpKind,
    SeqModel,
    check_conservation,
    check_sequential,
    is_linearizable,
    read_history,
    seq_apply,
    write_history,
)

PUSH, POP, STEAL = OpKind.PUSH, OpKind.POP, OpKind.STEAL


def E(thread, op, arg, inv, res, result=None):
    return Event(thread, op, arg, inv, res, result)


def test_seq_apply():
    assert seq_apply(SeqModel((1, 2)), POP, None, 2) == SeqModel((1,))
    assert seq_apply(SeqModel((1, 2)), STEAL, None, 2) is ILLEGAL
    assert seq_apply(SeqModel(), POP, None, None) == SeqModel()
    assert seq_apply(SeqModel((1,)), PUSH, 4, None) == SeqModel((1, 4))


def test_steal_racing_empty_pop():
    h = History([
        E("owner", PUSH, 1, 0, 1),
        E("s1", STEAL, None, 2, 5, 1),
        E("owner", POP, None, 3, 4, None),
    ])
    ok, witness = is_linearizable(h)
    assert ok
    assert [e.op for e in witness][0] is PUSH


def test_duplicate_steal_rejected():
    h = History([
        E("owner", PUSH, 1, 0, 1),
        E("s1", STEAL, None, 2, 5, 1),
        E("s2", STEAL, None, 3, 6, 1),
    ])
    assert is_linearizable(h) == (False, None)


def test_real_time_order_respected():
    # pop returned 1 before push(1) was invoked
    h = History([
        E("owner", POP, None, 0, 1, 1),
        E("owner", PUSH, 1, 2, 3),
    ], [])
    assert not is_linearizable(h)[0]


def test_drain_must_match():
    h = History([E("owner", PUSH, 1, 0, 1)], [])
    assert not is_linearizable(h)[0]
    assert is_linearizable(History([E("owner", PUSH, 1, 0, 1)], [1]))[0]


def test_empty_history():
    assert is_linearizable(History()) == (True, [])


def test_bound():
    events = [E("owner", PUSH, i, 2 * i, 2 * i + 1) for i in range(13)]
    with pytest.raises(LinearizabilityBoundError):
        is_linearizable(History(events, list(range(13))))


def _naive(h):
    events = h.events
    for perm in itertools.permutations(events):
        if any(perm[j].response_ts < perm[i].invoke_ts for i in range(len(perm)) for j in range(i + 1, len(perm))):
            continue
        model = SeqModel()
        for e in perm:
            model = seq_apply(model, e.op, e.arg, e.result)
            if model is ILLEGAL:
                break
        else:
            if list(model.items) == list(h.final_drain):
                return True
    return False


def _random_history(rng):
    n = rng.randint(0, 6)
    stamps = sorted(rng.sample(range(100), 2 * n))
    rng.shuffle(stamps)
    events = []
    for i in range(n):
        inv, res = sorted(stamps[2 * i:2 * i + 2])
        op = rng.choice(list(OpKind))
        if op is PUSH:
            events.append(E("owner", PUSH, rng.randint(1, 3), inv, res))
        else:
            events.append(E(f"t{i}", op, None, inv, res, rng.choice([None, 1, 2, 3])))
    drain = rng.sample([1, 2, 3], rng.randint(0, 2))
    return History(events, drain)


def test_agrees_with_brute_force():
    rng = random.Random(99)
    for _ in range(1000):
        h = _random_history(rng)
        assert is_linearizable(h)[0] == _naive(h), h


def test_conservation():
    h = History([
        E("owner", PUSH, 1, 0, 1), E("owner", PUSH, 2, 2, 3), E("owner", PUSH, 3, 4, 5),
        E("owner", POP, None, 6, 7, 3), E("s1", STEAL, None, 6, 8, 1),
    ], [2])
    assert check_conservation(h)
    dup = History([E("owner", PUSH, 1, 0, 1), E("s1", STEAL, None, 2, 3, 1), E("s2", STEAL, None, 2, 4, 1)])
    assert not check_conservation(dup)
    assert check_conservation(History([E("owner", PUSH, 1, 0, 1)], [1]))


def test_sequential_check():
    h = History([E("owner", PUSH, 1, 0, 1), E("owner", POP, None, 2, 3, None)], [1])
    assert not check_sequential(h)
    h = History([E("owner", PUSH, 1, 0, 1), E("owner", POP, None, 2, 3, 1)], [])
    assert check_sequential(h)


def test_history_validate():
    with pytest.raises(HistoryError):
        History([E("owner", PUSH, 1, 0, 5), E("owner", POP, None, 3, 6)]).validate()
    with pytest.raises(HistoryError):
        History([E("owner", PUSH, 1, 0, 1), E("s1", POP, None, 2, 3)]).validate()
    History([E("owner", PUSH, 1, 0, 1), E("s1", STEAL, None, 0, 3, 1)], []).validate()


def test_recorder_stamps_in_order(tmp_path):
    rec = HistoryRecorder()
    owner, thief = rec.lane("owner"), rec.lane("s1")
    a = owner.invoke()
    b = thief.invoke()
    owner.respond(PUSH, 1, a, None)
    thief.respond(STEAL, None, b, 1)
    h = rec.history([])
    assert [e.invoke_ts for e in h.events] == [0, 1]
    assert [e.response_ts for e in h.events] == [2, 3]
    assert is_linearizable(h)[0]

    path = tmp_path / "h.jsonl"
    write_history(path, h)
    back = read_history(path)
    assert back.events == h.events
    assert back.final_drain == []


def test_read_history_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": "owner", "op": "jump"}\n')
    with pytest.raises(HistoryError):
        read_history(path)


@pytest.mark.parametrize("line", ["5", "[1, 2]", '"steal"', "null"])
def test_read_history_rejects_non_objects(tmp_path, line):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(HistoryError, match="not an object"):
        read_history(path)

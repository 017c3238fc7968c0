"""
Tests for the live deque: single-threaded semantics, grow, reclamation
modes, instrumentation and a small concurrent smoke run.
"""

import concurrent.futures
import random

import pytest
from hypothesis import given, settings, strategies as st

from core.atomics import AtomicCell
from core.deque import Fault, Reclamation, new_deque, size_hint
from core.errors import UsageError
from core.reclamation import Domain
from core.state_oracle import TraceRecorder, TransitionKind


def test_new_deque_is_empty():
    owner, stealer = new_deque(8)
    assert (owner.shared.top.get(), owner.shared.bottom.get()) == (1, 1)
    assert owner.shared.array.get().capacity == 8
    assert size_hint(stealer) == 0


def test_zero_capacity_rejected():
    with pytest.raises(UsageError):
        new_deque(0)


def test_single_owner():
    owner, _ = new_deque(2)
    with pytest.raises(UsageError):
        type(owner)(owner.shared)


def test_push_writes_at_bottom():
    owner, _ = new_deque(4)
    owner.push(7)
    assert owner.shared.array.get().get(1) == 7
    assert owner.shared.bottom.get() == 2


def test_push_grows_when_full():
    owner, _ = new_deque(2)
    owner.push(5)
    owner.push(9)
    buf = owner.shared.array.get()
    assert buf.capacity == 4
    assert (buf.get(1), buf.get(2)) == (5, 9)
    assert owner.shared.bottom.get() == 3
    assert owner.grows == 1


def test_capacity_one_grows_on_first_push():
    owner, _ = new_deque(1)
    owner.push(3)
    assert owner.grows == 1
    assert owner.pop() == 3


def test_pop_branches():
    owner, _ = new_deque(8)
    assert owner.pop() is None
    assert (owner.shared.top.get(), owner.shared.bottom.get()) == (1, 1)
    owner.push(5)
    owner.push(6)
    assert owner.pop() == 6
    assert owner.shared.bottom.get() == 2
    assert owner.pop() == 5
    assert (owner.shared.top.get(), owner.shared.bottom.get()) == (2, 2)


def test_steal_takes_from_top():
    owner, stealer = new_deque(8)
    assert stealer.steal() is None
    owner.push(5)
    owner.push(6)
    assert stealer.steal() == 5
    assert owner.shared.top.get() == 2
    assert size_hint(owner) == 1


def test_size_hint_counts_pushes():
    owner, stealer = new_deque(8)
    for v in (1, 2, 3):
        owner.push(v)
    assert size_hint(stealer) == 3


def test_drain_and_close():
    owner, stealer = new_deque(2)
    for v in range(1, 6):
        owner.push(v)
    assert stealer.steal() == 1
    assert owner.close() == [2, 3, 4, 5]
    assert owner.shared.array.get().freed
    assert owner.close() == []


class _ListDeque:
    def __init__(self):
        self.items = []

    def push(self, v):
        self.items.append(v)

    def pop(self):
        return self.items.pop() if self.items else None

    def steal(self):
        return self.items.pop(0) if self.items else None


Ops = st.lists(st.sampled_from(["push", "pop", "steal"]), max_size=200)


@settings(max_examples=200)
@given(Ops, st.integers(1, 4), st.sampled_from(list(Reclamation)))
def test_sequential_matches_list(ops, capacity, mode):
    owner, stealer = new_deque(capacity, reclamation=mode)
    model = _ListDeque()
    for i, op in enumerate(ops):
        if op == "push":
            owner.push(i)
            model.push(i)
        elif op == "pop":
            assert owner.pop() == model.pop()
        else:
            assert stealer.steal() == model.steal()
    assert owner.close() == model.items


def test_sequential_conformance_long():
    rng = random.Random(7)
    owner, stealer = new_deque(1, reclamation=Reclamation.HAZARD)
    model = _ListDeque()
    for i in range(100_000):
        r = rng.random()
        if r < 0.5:
            owner.push(i)
            model.push(i)
        elif r < 0.75:
            assert owner.pop() == model.pop()
        else:
            assert stealer.steal() == model.steal()
    assert owner.close() == model.items


def test_hazard_mode_retires_old_arrays():
    domain = Domain(scan_threshold=1)
    owner, _ = new_deque(1, reclamation=Reclamation.HAZARD, domain=domain)
    for v in range(1, 9):
        owner.push(v)
    assert owner.grows == 4
    assert domain.stats.live == 1
    assert domain.stats.freed == 4


def test_steal_drops_shield():
    owner, stealer = new_deque(2, reclamation=Reclamation.HAZARD)
    owner.push(1)
    assert stealer.steal() == 1
    assert stealer.shield.protected is None
    assert stealer.steal() is None
    assert stealer.shield.protected is None


def test_clone_gets_its_own_shield():
    _, stealer = new_deque(2, reclamation=Reclamation.HAZARD)
    assert stealer.clone().shield is not stealer.shield


def test_trace_of_push_pop_steal_cycle():
    sink = TraceRecorder()
    owner, stealer = new_deque(2, sink=sink)
    owner.push(1)
    owner.push(2)
    assert owner.pop() == 2
    assert stealer.steal() == 1
    report = sink.validate()
    assert report.passed, report.violation
    assert report.kinds == [
        TransitionKind.WRITE_ARRAY, TransitionKind.PUSH,
        TransitionKind.ARCHIVE, TransitionKind.WRITE_ARRAY, TransitionKind.PUSH,
        TransitionKind.POP, TransitionKind.CAS_TOP,
    ]
    assert sink.hints[0] == "alloc"


def test_empty_restore_fault_loses_values():
    owner, stealer = new_deque(4, faults=[Fault.SKIP_EMPTY_RESTORE])
    assert owner.pop() is None
    owner.push(1)
    assert stealer.steal() is None
    assert owner.close() == []


def test_concurrent_smoke():
    owner, stealer = new_deque(2)
    stealers = [stealer.clone() for _ in range(3)]
    n = 5_000
    taken = []

    def work(handle):
        got = []
        while True:
            v = handle.steal()
            if v is not None:
                got.append(v)
            elif owner.shared.bottom.get() > n and handle.size_hint() == 0:
                break
        return got

    with concurrent.futures.ThreadPoolExecutor(max_workers=3) as executor:
        futures = [executor.submit(work, s) for s in stealers]
        for v in range(1, n + 1):
            owner.push(v)
        for f in futures:
            taken.extend(f.result())
    rest = owner.close()
    assert sorted(taken + rest) == list(range(1, n + 1))
    assert all(s.top_regressions == 0 for s in stealers)


class _TopHook(AtomicCell):
    """Runs ``action`` once, right after the next armed load of top."""

    def __init__(self, value):
        super().__init__(value)
        self.action = None

    def get(self):
        value = super().get()
        action, self.action = self.action, None
        if action is not None:
            action()
        return value


def test_size_hint_never_exceeds_true_size():
    owner, stealer = new_deque(8)
    for v in range(1, 6):
        owner.push(v)
    shared = owner.shared
    shared.top = _TopHook(shared.top.get())

    def steal_then_refill():
        for _ in range(5):
            assert stealer.steal() is not None
        for v in range(6, 11):
            owner.push(v)

    shared.top.action = steal_then_refill
    # the deque never holds more than five values during the call
    assert 0 <= size_hint(stealer) <= 5
    assert size_hint(stealer) == 5


def test_stealer_close_releases_shield():
    domain = Domain()
    owner, stealer = new_deque(2, reclamation=Reclamation.HAZARD, domain=domain)
    clones = [stealer.clone() for _ in range(10)]
    assert domain.shield_count == 11
    for handle in clones:
        handle.close()
    assert domain.shield_count == 1
    with pytest.raises(UsageError):
        clones[0].steal()
    owner.push(3)
    assert stealer.steal() == 3

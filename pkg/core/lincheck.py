"""
core/lincheck.py - Linearizability checking of recorded deque histories.

The sequential model is a plain list. push appends at the bottom; pop
returning v removes v from the bottom; steal returning v removes v from the
top; pop or steal returning None is always allowed and changes nothing.
is_linearizable searches for an order of the recorded events that respects
real time (an event may only be placed after every event that responded
before it was invoked) and that the model accepts.
"""

import enum
import json
import os
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from core.atomics import AtomicCell
from core.errors import HistoryError, LinearizabilityBoundError

DEFAULT_BOUND = 12


class OpKind(enum.Enum):
    PUSH  = "push"
    POP   = "pop"
    STEAL = "steal"


class _Illegal:
    __slots__ = ()

    def __repr__(self) -> str:
        return "Illegal"

    def __bool__(self) -> bool:
        return False


ILLEGAL = _Illegal()


@dataclass(frozen=True)
class Event:
    thread:      str
    op:          OpKind
    arg:         int | None    # pushed value; None for pop/steal
    invoke_ts:   int
    response_ts: int
    result:      int | None    # Some(v) as v, None as None; push always None

    def describe(self) -> str:
        if self.op is OpKind.PUSH:
            return f"{self.thread}:push({self.arg})"
        out = "None" if self.result is None else f"Some({self.result})"
        return f"{self.thread}:{self.op.value}->{out}"


@dataclass
class History:
    events:      list[Event] = field(default_factory=list)
    final_drain: list[int]   = field(default_factory=list)

    def validate(self) -> None:
        """Per-thread events must not overlap; push/pop come from one owner."""
        owners = {e.thread for e in self.events if e.op is not OpKind.STEAL}
        if len(owners) > 1:
            raise HistoryError(f"push/pop issued by more than one thread: {sorted(owners)}")
        last: dict[str, Event] = {}
        for e in sorted(self.events, key=lambda e: e.invoke_ts):
            if e.invoke_ts >= e.response_ts:
                raise HistoryError(f"{e.describe()} responds before it is invoked")
            prev = last.get(e.thread)
            if prev is not None and prev.response_ts > e.invoke_ts:
                raise HistoryError(f"{prev.describe()} overlaps {e.describe()} on one thread")
            last[e.thread] = e


# ── Sequential model ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SeqModel:
    items: tuple[int, ...] = ()


def seq_apply(m: SeqModel, op: OpKind, arg: int | None, result: int | None) -> "SeqModel | _Illegal":
    items = m.items
    if op is OpKind.PUSH:
        return SeqModel(items + (arg,))
    if result is None:
        return m
    if op is OpKind.POP:
        if items and items[-1] == result:
            return SeqModel(items[:-1])
        return ILLEGAL
    if items and items[0] == result:
        return SeqModel(items[1:])
    return ILLEGAL


# ── Checkers ──────────────────────────────────────────────────────────────────

def is_linearizable(h: History, bound: int = DEFAULT_BOUND) -> tuple[bool, list[Event] | None]:
    """
    Exhaustive search with memoisation on (events placed, model state).
    Returns (True, witness order) or (False, None). Refuses histories longer
    than ``bound``.
    """
    events = sorted(h.events, key=lambda e: e.invoke_ts)
    n = len(events)
    if n > bound:
        raise LinearizabilityBoundError(f"{n} events exceeds the exhaustive bound of {bound}")
    drain = tuple(h.final_drain)
    full = (1 << n) - 1
    seen: set[tuple[int, tuple[int, ...]]] = set()
    order: list[int] = []

    def search(done: int, model: SeqModel) -> bool:
        if done == full:
            return model.items == drain
        if (done, model.items) in seen:
            return False
        seen.add((done, model.items))
        # earliest response among events not yet placed
        horizon = min(events[i].response_ts for i in range(n) if not done >> i & 1)
        for i in range(n):
            if done >> i & 1:
                continue
            e = events[i]
            if e.invoke_ts > horizon:
                break
            nxt = seq_apply(model, e.op, e.arg, e.result)
            if nxt is ILLEGAL:
                continue
            order.append(i)
            if search(done | 1 << i, nxt):
                return True
            order.pop()
        return False

    if search(0, SeqModel()):
        return True, [events[i] for i in order]
    return False, None


def check_conservation(h: History) -> bool:
    """
    Every pushed value comes back exactly once: as a pop/steal result or in
    the final drain. Values are expected to be unique per run.
    """
    pushed = Counter(e.arg for e in h.events if e.op is OpKind.PUSH)
    taken  = Counter(e.result for e in h.events if e.op is not OpKind.PUSH and e.result is not None)
    if any(c > 1 for c in taken.values()):
        return False
    return pushed == taken + Counter(h.final_drain)


def check_sequential(h: History) -> bool:
    """
    Single-threaded strengthening: replaying in program order,
    pop and steal on a non-empty deque must return Some.
    """
    model = SeqModel()
    for e in sorted(h.events, key=lambda e: e.invoke_ts):
        if e.op is not OpKind.PUSH and e.result is None and model.items:
            return False
        nxt = seq_apply(model, e.op, e.arg, e.result)
        if nxt is ILLEGAL:
            return False
        model = nxt
    return list(model.items) == list(h.final_drain)


# ── Recording ─────────────────────────────────────────────────────────────────

class HistoryRecorder:
    """
    Stamps invocations and responses from one shared counter. Each thread
    appends to its own list, so recording never contends beyond the counter.
    """

    def __init__(self):
        self._clock = AtomicCell(0)
        self._lanes: dict[str, list[Event]] = {}

    def lane(self, thread: str) -> "Lane":
        events = self._lanes.setdefault(thread, [])
        return Lane(thread, self._clock, events)

    def history(self, final_drain: Iterable[int] = ()) -> History:
        events = [e for lane in self._lanes.values() for e in lane]
        events.sort(key=lambda e: e.invoke_ts)
        return History(events, list(final_drain))


class Lane:
    __slots__ = ("thread", "_clock", "_events")

    def __init__(self, thread: str, clock: AtomicCell, events: list[Event]):
        self.thread  = thread
        self._clock  = clock
        self._events = events

    def invoke(self) -> int:
        return self._clock.get_and_add(1)

    def respond(self, op: OpKind, arg: int | None, invoked: int, result: int | None) -> None:
        self._events.append(Event(self.thread, op, arg, invoked, self._clock.get_and_add(1), result))


# ── History files ─────────────────────────────────────────────────────────────

def event_to_json(e: Event) -> dict:
    if e.op is OpKind.PUSH:
        out = "unit"
    else:
        out = "none" if e.result is None else e.result
    return {"t": e.thread, "op": e.op.value, "arg": e.arg, "inv": e.invoke_ts, "res": e.response_ts, "out": out}


def write_history(path: str | os.PathLike, h: History) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in h.events:
            f.write(json.dumps(event_to_json(e)) + "\n")
        f.write(json.dumps({"drain": list(h.final_drain)}) + "\n")


def read_history(path: str | os.PathLike) -> History:
    events: list[Event] = []
    drain: list[int] | None = None
    with open(path, "r", encoding="utf-8") as f:
        for index, line in enumerate(f):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HistoryError(f"line {index}: not JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise HistoryError(f"line {index}: record is not an object")
            if drain is not None:
                raise HistoryError(f"line {index}: record after the drain record")
            if "drain" in raw:
                drain = list(raw["drain"])
                continue
            try:
                op = OpKind(raw["op"])
                out = raw["out"]
                result = None if out in ("none", "unit") else int(out)
                events.append(Event(str(raw["t"]), op, raw.get("arg"), int(raw["inv"]), int(raw["res"]), result))
            except (KeyError, ValueError, TypeError) as exc:
                raise HistoryError(f"line {index}: bad event ({exc})") from None
    return History(events, drain or [])


def format_events(events: Sequence[Event]) -> str:
    return ", ".join(e.describe() for e in events)

"""
core/state_oracle.py - Deque-state rules as executable validators.

An AuthState is the authoritative view of a deque at one instant: era,
array identity, full array contents, top and bottom (bottom as the owner
means it, i.e. the pre-decrement value while a pop is undecided). A trace is
the sequence of AuthStates a run passes through; validate_trace checks that
every step is one of the permitted rules and that no snapshot taken earlier
is contradicted later.
"""

import enum
import json
import logging
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from core.errors import TraceParseError, TransitionError, UsageError
from core.ring_buffer import FILL

log = logging.getLogger(__name__)


def tbs(t: int, b: int) -> int:
    """
    Pack (t, b) into one number whose order means: top never decreases, and
    a non-empty deque cannot become empty without top moving.
    """
    if t > b:
        raise UsageError(f"tbs needs t <= b, got t={t} b={b}")
    return 2 * t + 1 if t < b else 2 * t


# ── States ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Snapshot:
    era:      int
    array_id: int
    top:      int
    bottom:   int
    top_elem: int | None   # present iff top < bottom


@dataclass(frozen=True)
class AuthState:
    era:      int
    array_id: int
    contents: tuple[int, ...]
    top:      int
    bottom:   int

    @classmethod
    def initial(cls, capacity: int, array_id: int = 1, era: int = 0) -> "AuthState":
        """Freshly allocated deque: zero-filled array, t = b = 1."""
        if capacity < 1:
            raise UsageError(f"capacity must be >= 1, got {capacity}")
        return cls(era, array_id, (FILL,) * capacity, 1, 1)

    @property
    def capacity(self) -> int:
        return len(self.contents)

    def at(self, i: int) -> int:
        return self.contents[i % len(self.contents)]

    def check(self) -> None:
        t, b, n = self.top, self.bottom, len(self.contents)
        if not (n >= 1 and 1 <= t <= b < t + n):
            raise TransitionError("deque invariant", f"1 <= t <= b < t + |L| fails for t={t} b={b} |L|={n}")

    def snapshot(self) -> Snapshot:
        elem = self.at(self.top) if self.top < self.bottom else None
        return Snapshot(self.era, self.array_id, self.top, self.bottom, elem)

    def items(self) -> list[int]:
        """Logical contents, top first."""
        return [self.at(i) for i in range(self.top, self.bottom)]


class TransitionKind(enum.Enum):
    WRITE_ARRAY = "write-array"
    PUSH        = "push"
    POP         = "pop"
    CAS_TOP     = "cas-top"
    ARCHIVE     = "archive"


def snapshot_valid(older: Snapshot, newer: "Snapshot | AuthState") -> bool:
    """True iff ``newer`` could follow ``older``: t1 <= t2, and if top did not
    move from a non-empty state, it is still non-empty with the same top element."""
    if isinstance(newer, AuthState):
        newer = newer.snapshot()
    if older.top > newer.top:
        return False
    if older.top == newer.top and older.top < older.bottom:
        return newer.top < newer.bottom and older.top_elem == newer.top_elem
    return True


def transition_check(prev: AuthState, next: AuthState) -> TransitionKind:
    """Classify one authoritative step; raise TransitionError when no rule fits."""
    next.check()
    t, b, n = prev.top, prev.bottom, prev.capacity

    if next.era != prev.era or next.array_id != prev.array_id:
        rule = TransitionKind.ARCHIVE.value
        if next.era <= prev.era:
            raise TransitionError(rule, f"era must advance, got {prev.era} -> {next.era}")
        if next.array_id == prev.array_id:
            raise TransitionError(rule, "array must be replaced when the era advances")
        if (next.top, next.bottom) != (t, b):
            raise TransitionError(rule, f"t, b must stay ({t}, {b}), got ({next.top}, {next.bottom})")
        if next.capacity < n:
            raise TransitionError(rule, f"|L| <= |L'| fails: {n} > {next.capacity}")
        for i in range(t, b):
            if prev.at(i) != next.at(i):
                raise TransitionError(rule, f"L[t..b) = L'[t..b) fails at index {i}")
        return TransitionKind.ARCHIVE

    if next.top < t:
        raise TransitionError("top monotonicity", f"top decreased from {t} to {next.top}")

    if (next.top, next.bottom) == (t, b):
        changed = [p for p in range(n) if prev.contents[p] != next.contents[p]]
        if changed and changed != [b % n]:
            raise TransitionError(TransitionKind.WRITE_ARRAY.value,
                                  f"only slot b mod |L| = {b % n} may change, got {changed}")
        return TransitionKind.WRITE_ARRAY

    if prev.contents != next.contents:
        raise TransitionError("frame", "array contents changed together with an index")

    if next.top == t:
        if next.bottom == b + 1:
            if not b + 1 < t + n:
                raise TransitionError(TransitionKind.PUSH.value, f"b+1 < t+|L| fails: {b + 1} >= {t + n}")
            return TransitionKind.PUSH
        if next.bottom == b - 1:
            if not t < b - 1:
                raise TransitionError(TransitionKind.POP.value, f"t < b-1 fails: t={t} b={b}")
            return TransitionKind.POP
        raise TransitionError("bottom step", f"bottom moved from {b} to {next.bottom}")

    if next.top == t + 1 and next.bottom == b:
        if not t < b:
            raise TransitionError(TransitionKind.CAS_TOP.value, f"t < b fails: t={t} b={b}")
        return TransitionKind.CAS_TOP

    raise TransitionError("top step", f"(t, b) moved from ({t}, {b}) to ({next.top}, {next.bottom})")


# ── Trace validation ──────────────────────────────────────────────────────────

@dataclass
class TraceReport:
    passed:    bool
    kinds:     list[TransitionKind]      = field(default_factory=list)
    violation: str | None                = None
    failed_at: int | None                = None
    archive:   dict[int, AuthState]      = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "passed":    self.passed,
            "steps":     len(self.kinds),
            "kinds":     [k.value for k in self.kinds],
            "violation": self.violation,
            "failed_at": self.failed_at,
            "eras":      sorted(self.archive),
        }


def validate_trace(trace: Sequence[AuthState]) -> TraceReport:
    """
    Fold transition_check over ``trace`` and check the global properties:
    tbs never decreases, each era names one array of one capacity, and every
    earlier snapshot is valid against every later state.
    """
    if not trace:
        raise UsageError("trace is empty")
    report = TraceReport(passed=True)

    def fail(index: int, message: str) -> TraceReport:
        report.passed    = False
        report.violation = message
        report.failed_at = index
        log.debug("Trace rejected at state %d: %s", index, message)
        return report

    first = trace[0]
    try:
        first.check()
    except TransitionError as exc:
        return fail(0, str(exc))
    if (first.top, first.bottom) != (1, 1):
        return fail(0, f"allocation: initial state must have t = b = 1, got ({first.top}, {first.bottom})")

    eras: dict[int, tuple[int, int]] = {first.era: (first.array_id, first.capacity)}
    arrays: dict[int, int] = {first.array_id: first.era}
    # First non-empty snapshot taken at the current top; later states with the
    # same top must agree with it. With top non-decreasing this covers every
    # (snapshot, later state) pair.
    pinned = first.snapshot() if first.top < first.bottom else None

    for i in range(1, len(trace)):
        prev, cur = trace[i - 1], trace[i]
        try:
            kind = transition_check(prev, cur)
        except TransitionError as exc:
            return fail(i, str(exc))
        report.kinds.append(kind)

        if tbs(cur.top, cur.bottom) < tbs(prev.top, prev.bottom):
            return fail(i, f"tbs decreased: {tbs(prev.top, prev.bottom)} -> {tbs(cur.top, cur.bottom)}")

        known = eras.setdefault(cur.era, (cur.array_id, cur.capacity))
        if known != (cur.array_id, cur.capacity):
            return fail(i, f"era agreement: era {cur.era} names array {known} and {(cur.array_id, cur.capacity)}")
        if arrays.setdefault(cur.array_id, cur.era) != cur.era:
            return fail(i, f"array {cur.array_id} reused across eras")
        if kind is TransitionKind.ARCHIVE:
            report.archive[prev.era] = prev

        if pinned is not None and cur.top != pinned.top:
            pinned = None
        if pinned is None:
            if cur.top < cur.bottom:
                pinned = cur.snapshot()
        elif not snapshot_valid(pinned, cur):
            return fail(i, f"snapshot validity: top element at index {pinned.top} not preserved")
    return report


# ── Trace records ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TraceRecord:
    seq:       int
    era:       int
    arr:       int
    cap:       int
    top:       int
    bot:       int
    write:     tuple[int, int] | None = None   # (logical index, value)
    kind_hint: str | None             = None

    def to_json(self) -> dict:
        return {
            "seq": self.seq, "era": self.era, "arr": self.arr, "cap": self.cap,
            "top": self.top, "bot": self.bot,
            "write": None if self.write is None else {"idx": self.write[0], "val": self.write[1]},
            "kind_hint": self.kind_hint,
        }


_INT_FIELDS = ("seq", "era", "arr", "cap", "top", "bot")


def parse_record(index: int, line: str) -> TraceRecord:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceParseError(index, f"not JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise TraceParseError(index, "record is not an object")
    values = {}
    for name in _INT_FIELDS:
        v = raw.get(name)
        if not isinstance(v, int) or isinstance(v, bool):
            raise TraceParseError(index, f"field {name!r} must be an integer")
        values[name] = v
    write = raw.get("write")
    if write is not None:
        if not isinstance(write, dict) or not all(
            isinstance(write.get(k), int) and not isinstance(write.get(k), bool) for k in ("idx", "val")
        ):
            raise TraceParseError(index, "field 'write' must be null or {idx, val}")
        write = (write["idx"], write["val"])
    hint = raw.get("kind_hint")
    if hint is not None and not isinstance(hint, str):
        raise TraceParseError(index, "field 'kind_hint' must be a string or null")
    if values["cap"] < 1:
        raise TraceParseError(index, "field 'cap' must be positive")
    return TraceRecord(write=write, kind_hint=hint, **values)


def read_trace(path: str | os.PathLike) -> list[TraceRecord]:
    records: list[TraceRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = parse_record(len(records), line)
            if records and rec.seq <= records[-1].seq:
                raise TraceParseError(len(records), f"seq {rec.seq} does not increase")
            records.append(rec)
    if not records:
        raise TraceParseError(0, "empty trace")
    return records


def write_trace(path: str | os.PathLike, records: Iterable[TraceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec.to_json()) + "\n")


def states_from_records(records: Sequence[TraceRecord]) -> list[AuthState]:
    """
    Rebuild full AuthStates. A record on a new array inherits the circular
    slice [t, b) of the previous state (zero elsewhere); a write record
    updates one slot.
    """
    states: list[AuthState] = []
    for index, rec in enumerate(records):
        if not states:
            contents = [FILL] * rec.cap
        else:
            prev = states[-1]
            if (rec.era, rec.arr) != (prev.era, prev.array_id):
                contents = [FILL] * rec.cap
                for i in range(prev.top, prev.bottom):
                    contents[i % rec.cap] = prev.at(i)
            else:
                contents = list(prev.contents)
                if rec.cap != len(contents):
                    raise TraceParseError(index, f"capacity changed within array {rec.arr}")
        if rec.write is not None:
            idx, val = rec.write
            contents[idx % rec.cap] = val
        states.append(AuthState(rec.era, rec.arr, tuple(contents), rec.top, rec.bot))
    return states


class TraceRecorder:
    """
    Sink for the deque's instrumentation hook. The deque calls it once per
    authoritative transition while holding its trace lock, so calls arrive in
    the order the transitions took effect.
    """

    def __init__(self):
        self.states: list[AuthState]      = []
        self.hints:  list[str | None]     = []
        self.writes: list[tuple[int, int] | None] = []

    def __call__(self, state: AuthState, hint: str | None = None,
                 write: tuple[int, int] | None = None) -> None:
        self.states.append(state)
        self.hints.append(hint)
        self.writes.append(write)

    def records(self) -> list[TraceRecord]:
        return [
            TraceRecord(seq, s.era, s.array_id, s.capacity, s.top, s.bottom, w, h)
            for seq, (s, h, w) in enumerate(zip(self.states, self.hints, self.writes))
        ]

    def dump(self, path: str | os.PathLike) -> None:
        write_trace(path, self.records())

    def validate(self) -> TraceReport:
        return validate_trace(self.states)

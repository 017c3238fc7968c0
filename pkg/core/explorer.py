"""
core/explorer.py - Exhaustive interleaving exploration of the deque.

The model executes push, pop and steal one shared-memory action at a time
(each load, store and CAS of top, bottom, the array pointer, an array slot or
a hazard slot is one step; local arithmetic rides along with the next
action). explore() runs a depth-first search over every schedule of a small
program and checks, on every path:

  - each authoritative step is a legal deque-state rule (state_oracle),
  - the results seen so far are still linearizable,
  - nobody reads an array after it was freed (hazard mode),

and at every final state replays the schedule to run the full history and
trace checks. States are merged when the shared memory, every thread's
position and results, and the set of possible abstract deques agree, which
is enough for the verdict to depend only on the state.
"""

import json
import logging
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

from core.deque import Fault, Reclamation
from core.errors import (
    LinearizabilityBoundError,
    ModelViolation,
    ScheduleError,
    TransitionError,
    UsageError,
)
from core.lincheck import DEFAULT_BOUND, Event, History, OpKind, check_conservation, is_linearizable
from core.ring_buffer import FILL, grow_slots
from core.state_oracle import AuthState, transition_check, validate_trace

log = logging.getLogger(__name__)

OWNER = "owner"
UNIT  = "unit"
NONE  = "none"


# ── Programs ──────────────────────────────────────────────────────────────────

class Op(NamedTuple):
    kind: OpKind
    arg:  int | None = None

    @classmethod
    def parse(cls, text: str) -> "Op":
        name, _, arg = text.partition(":")
        try:
            kind = OpKind(name.strip().lower())
        except ValueError:
            raise UsageError(f"unknown operation {text!r}") from None
        if kind is OpKind.PUSH:
            try:
                return cls(kind, int(arg))
            except ValueError:
                raise UsageError(f"push needs an integer argument, got {text!r}") from None
        if arg:
            raise UsageError(f"{kind.value} takes no argument, got {text!r}")
        return cls(kind)

    def __str__(self) -> str:
        return f"push:{self.arg}" if self.kind is OpKind.PUSH else self.kind.value


@dataclass(frozen=True)
class Program:
    """Per-thread operation lists plus the deque they run against."""

    threads:  Mapping[str, Sequence[Op]]
    capacity: int                 = 1
    preload:  tuple[int, ...]     = ()
    mode:     Reclamation         = Reclamation.KEEP_ALL
    faults:   frozenset[Fault]    = frozenset()

    def __post_init__(self):
        if self.capacity < 1:
            raise UsageError(f"capacity must be >= 1, got {self.capacity}")
        for name, ops in self.threads.items():
            if name != OWNER and any(op.kind is not OpKind.STEAL for op in ops):
                raise UsageError(f"thread {name!r} may only steal; push and pop belong to {OWNER!r}")

    @classmethod
    def from_json(cls, data: Mapping) -> "Program":
        if not isinstance(data, Mapping) or not isinstance(data.get("threads", {}), Mapping):
            raise UsageError("program must be an object with a 'threads' object")
        try:
            threads = {str(name): tuple(Op.parse(s) for s in ops) for name, ops in data.get("threads", {}).items()}
            return cls(
                threads  = threads,
                capacity = int(data.get("capacity", 1)),
                preload  = tuple(int(v) for v in data.get("preload", ())),
                mode     = Reclamation(data.get("mode", Reclamation.KEEP_ALL.value)),
                faults   = frozenset(Fault(f) for f in data.get("faults", ())),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"bad program: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Program":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: not JSON ({exc.msg})") from None
        return cls.from_json(data)

    def names(self) -> tuple[str, ...]:
        others = tuple(n for n in self.threads if n != OWNER)
        if OWNER in self.threads or self.preload:
            return (OWNER,) + others
        return others

    def ops_of(self, name: str) -> tuple[Op, ...]:
        ops = tuple(self.threads.get(name, ()))
        if name == OWNER:
            return tuple(Op(OpKind.PUSH, v) for v in self.preload) + ops
        return ops


# ── Model state ───────────────────────────────────────────────────────────────

class Locals(NamedTuple):
    b:      int | None = None
    t:      int | None = None
    circle: int | None = None
    v:      int | None = None
    ok:     bool | None = None
    cand:   int | None = None


_NO_LOCALS = Locals()


class ThreadState(NamedTuple):
    op_index: int
    pc:       str | None          # None: next step invokes ops[op_index]
    locals:   Locals
    results:  tuple               # UNIT, NONE or a value, one per finished op


# A possible abstract deque: its items plus the operations already placed in
# the order but not yet responded, with the result each was placed with.
Config = tuple[tuple[int, ...], tuple[tuple[int, object], ...]]


class ModelState(NamedTuple):
    top:         int
    bottom:      int
    auth_bottom: int
    array:       int                          # index into buffers; doubles as era
    buffers:     tuple[tuple[int, ...], ...]
    freed:       frozenset[int]
    retired:     tuple[int, ...]
    hazards:     tuple[int | None, ...]
    threads:     tuple[ThreadState, ...]
    frontier:    frozenset[Config]

    def auth(self) -> AuthState:
        return AuthState(self.array, self.array + 1, self.buffers[self.array], self.top, self.auth_bottom)

    def drain(self) -> list[int]:
        buf = self.buffers[self.array]
        return [buf[i % len(buf)] for i in range(self.top, self.bottom)]


class _Effect(NamedTuple):
    invoked:   bool          = False
    response:  object | None = None   # UNIT, NONE or a value once the op finishes
    cas_top:   int | None    = None   # t of a successful CAS t -> t+1
    auth:      AuthState | None = None


_NOTHING = _Effect()


def _choices(items: tuple[int, ...], op: Op) -> list[tuple[object, tuple[int, ...]]]:
    if op.kind is OpKind.PUSH:
        return [(UNIT, items + (op.arg,))]
    out: list[tuple[object, tuple[int, ...]]] = [(NONE, items)]
    if items:
        if op.kind is OpKind.POP:
            out.append((items[-1], items[:-1]))
        else:
            out.append((items[0], items[1:]))
    return out


def _close(frontier: frozenset[Config], pending: Mapping[int, Op]) -> frozenset[Config]:
    """Add every config reachable by placing more pending operations."""
    seen = set(frontier)
    work = list(frontier)
    while work:
        items, placed = work.pop()
        done = {tid for tid, _ in placed}
        for tid, op in pending.items():
            if tid in done:
                continue
            for result, nitems in _choices(items, op):
                cfg = (nitems, tuple(sorted(placed + ((tid, result),), key=lambda p: p[0])))
                if cfg not in seen:
                    seen.add(cfg)
                    work.append(cfg)
    return frozenset(seen)


# ── Model ─────────────────────────────────────────────────────────────────────

class Model:
    """Micro-step semantics of push, pop and steal for one Program."""

    def __init__(self, program: Program):
        self.program = program
        self.names   = program.names()
        self.ops     = tuple(program.ops_of(n) for n in self.names)
        self.hazard  = program.mode is Reclamation.HAZARD
        self.faults  = program.faults

    # ── Setup ────────────────────────────────────────────────────────────────
    def blank(self) -> ModelState:
        n = len(self.names)
        return ModelState(
            top=1, bottom=1, auth_bottom=1, array=0,
            buffers=((FILL,) * self.program.capacity,),
            freed=frozenset(), retired=(), hazards=(None,) * n,
            threads=tuple(ThreadState(0, None, _NO_LOCALS, ()) for _ in range(n)),
            frontier=frozenset({((), ())}),
        )

    def initial(self) -> ModelState:
        state = self.blank()
        while self._preloading(state):
            state, _ = self.advance(state, 0)
        return state

    def _preloading(self, state: ModelState) -> bool:
        return bool(self.program.preload) and state.threads[0].op_index < len(self.program.preload)

    def runnable(self, state: ModelState) -> list[int]:
        return [i for i, th in enumerate(state.threads) if th.op_index < len(self.ops[i])]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UsageError(f"unknown thread {name!r}") from None

    def step(self, state: ModelState, tid: str) -> ModelState:
        """Run one atomic micro-step of thread ``tid``."""
        return self.advance(state, self.index_of(tid))[0]

    # ── One step ─────────────────────────────────────────────────────────────
    def advance(self, state: ModelState, i: int) -> tuple[ModelState, _Effect]:
        th = state.threads[i]
        op = self.ops[i][th.op_index]
        if th.pc is None:
            threads = _put(state.threads, i, th._replace(pc="start"))
            pending = {j: self.ops[j][t.op_index] for j, t in enumerate(threads) if t.pc is not None}
            return state._replace(threads=threads, frontier=_close(state.frontier, pending)), _Effect(invoked=True)

        before = (state.array, state.top, state.auth_bottom, state.buffers[state.array])
        if op.kind is OpKind.PUSH:
            new, eff = self._push(state, i, th, op.arg)
        elif op.kind is OpKind.POP:
            new, eff = self._pop(state, i, th)
        else:
            new, eff = self._steal(state, i, th)

        if (new.array, new.top, new.auth_bottom, new.buffers[new.array]) != before:
            auth = new.auth()
            try:
                transition_check(state.auth(), auth)
            except TransitionError as exc:
                raise ModelViolation("oracle", f"{self.names[i]} {op} at {th.pc}: {exc}") from None
            eff = eff._replace(auth=auth)
        return new, eff

    def _read(self, state: ModelState, i: int, circle: int, index: int) -> int:
        if circle in state.freed:
            raise ModelViolation("use-after-free", f"{self.names[i]} read array {circle} after it was freed")
        buf = state.buffers[circle]
        return buf[index % len(buf)]

    def _respond(self, state: ModelState, i: int, th: ThreadState, result: object) -> tuple[ModelState, _Effect]:
        frontier = frozenset(
            (items, tuple(p for p in placed if p[0] != i))
            for items, placed in state.frontier
            if (i, result) in placed
        )
        if not frontier:
            op = self.ops[i][th.op_index]
            raise ModelViolation("linearizability", f"{self.names[i]} {op} returned {result}, which no order explains")
        done = ThreadState(th.op_index + 1, None, _NO_LOCALS, th.results + (result,))
        return state._replace(threads=_put(state.threads, i, done), frontier=frontier), _Effect(response=result)

    def _goto(self, state: ModelState, i: int, th: ThreadState, pc: str, **changes) -> ModelState:
        return state._replace(threads=_put(state.threads, i, th._replace(pc=pc, locals=th.locals._replace(**changes))))

    def _scan(self, state: ModelState, retired: tuple[int, ...]) -> ModelState:
        keep = tuple(r for r in retired if r in state.hazards)
        gone = frozenset(r for r in retired if r not in state.hazards)
        return state._replace(retired=keep, freed=state.freed | gone)

    # ── push ─────────────────────────────────────────────────────────────────
    def _push(self, s: ModelState, i: int, th: ThreadState, v: int) -> tuple[ModelState, _Effect]:
        pc, loc = th.pc, th.locals
        if pc == "start":
            return self._goto(s, i, th, "read_top", b=s.bottom), _NOTHING
        if pc == "read_top":
            return self._goto(s, i, th, "read_arr", t=s.top), _NOTHING
        if pc == "read_arr":
            sz = len(s.buffers[s.array])
            nxt = "grow" if loc.t + sz <= loc.b + 1 else "reread_arr"
            return self._goto(s, i, th, nxt, circle=s.array), _NOTHING
        if pc == "grow":
            if loc.circle in s.freed:
                raise ModelViolation("use-after-free", f"{self.names[i]} grew from freed array {loc.circle}")
            new_id = len(s.buffers)
            s = s._replace(buffers=s.buffers + (tuple(grow_slots(s.buffers[loc.circle], loc.t, loc.b)),))
            if self.hazard and Fault.RETIRE_BEFORE_PUBLISH in self.faults:
                return self._goto(s, i, th, "retire_early", cand=new_id), _NOTHING
            s = s._replace(array=new_id)
            return self._goto(s, i, th, "retire" if self.hazard else "reread_arr"), _NOTHING
        if pc == "retire_early":
            s = self._scan(s, s.retired + (loc.circle,))
            return self._goto(s, i, th, "publish"), _NOTHING
        if pc == "publish":
            return self._goto(s._replace(array=loc.cand), i, th, "reread_arr"), _NOTHING
        if pc == "retire":
            s = self._scan(s, s.retired + (loc.circle,))
            return self._goto(s, i, th, "reread_arr"), _NOTHING
        if pc == "reread_arr":
            return self._goto(s, i, th, "write", circle=s.array), _NOTHING
        if pc == "write":
            self._read(s, i, loc.circle, loc.b)
            buf = list(s.buffers[loc.circle])
            buf[loc.b % len(buf)] = v
            buffers = s.buffers[:loc.circle] + (tuple(buf),) + s.buffers[loc.circle + 1:]
            return self._goto(s._replace(buffers=buffers), i, th, "store_bot"), _NOTHING
        if pc == "store_bot":
            s = s._replace(bottom=loc.b + 1, auth_bottom=loc.b + 1)
            return self._respond(s, i, th, UNIT)
        raise AssertionError(f"push has no step {pc!r}")

    # ── pop ──────────────────────────────────────────────────────────────────
    def _pop(self, s: ModelState, i: int, th: ThreadState) -> tuple[ModelState, _Effect]:
        pc, loc = th.pc, th.locals
        early = Fault.POP_READS_TOP_FIRST in self.faults
        if pc == "start":
            return self._goto(s, i, th, "read_arr", b=s.bottom - 1), _NOTHING
        if pc == "read_arr":
            return self._goto(s, i, th, "read_top_early" if early else "store_bot", circle=s.array), _NOTHING
        if pc == "store_bot":
            return self._goto(s._replace(bottom=loc.b), i, th, "read_top"), _NOTHING
        if pc == "read_top":
            return self._decide(s, i, th, s.top)
        if pc == "read_top_early":
            return self._goto(s, i, th, "store_bot_late", t=s.top), _NOTHING
        if pc == "store_bot_late":
            return self._decide(s._replace(bottom=loc.b), i, th, loc.t)
        if pc == "restore":
            return self._respond(s._replace(bottom=loc.t), i, th, NONE)
        if pc == "read_slot":
            v = self._read(s, i, loc.circle, loc.b)
            if loc.t < loc.b:
                return self._respond(s, i, th, v)
            if Fault.POP_SKIPS_CAS in self.faults:
                return self._goto(s, i, th, "fix_bot", v=v, ok=True), _NOTHING
            return self._goto(s, i, th, "cas", v=v), _NOTHING
        if pc == "cas":
            ok = s.top == loc.t
            if ok:
                s = s._replace(top=loc.t + 1)
            nxt = self._goto(s, i, th, "fix_bot", ok=ok)
            return nxt, _Effect(cas_top=loc.t if ok else None)
        if pc == "fix_bot":
            s = s._replace(bottom=loc.t + 1)
            return self._respond(s, i, th, loc.v if loc.ok else NONE)
        raise AssertionError(f"pop has no step {pc!r}")

    def _decide(self, s: ModelState, i: int, th: ThreadState, t: int) -> tuple[ModelState, _Effect]:
        b = th.locals.b
        if t < b:
            s = s._replace(auth_bottom=b)
        if b < t:
            if Fault.SKIP_EMPTY_RESTORE in self.faults:
                return self._respond(s, i, th, NONE)
            return self._goto(s, i, th, "restore", t=t), _NOTHING
        return self._goto(s, i, th, "read_slot", t=t), _NOTHING

    # ── steal ────────────────────────────────────────────────────────────────
    def _steal(self, s: ModelState, i: int, th: ThreadState) -> tuple[ModelState, _Effect]:
        pc, loc = th.pc, th.locals
        late = Fault.STEAL_READS_AFTER_CAS in self.faults
        if pc == "start":
            return self._goto(s, i, th, "read_bot", t=s.top), _NOTHING
        if pc == "read_bot":
            return self._goto(s, i, th, "protect_load" if self.hazard else "read_arr", b=s.bottom), _NOTHING
        if pc == "read_arr":
            return self._checked(s._replace(), i, th, s.array)
        if pc == "protect_load":
            return self._goto(s, i, th, "announce", cand=s.array), _NOTHING
        if pc == "announce":
            return self._goto(s._replace(hazards=_put(s.hazards, i, loc.cand)), i, th, "validate"), _NOTHING
        if pc == "validate":
            if s.array != loc.cand:
                return self._goto(s, i, th, "announce", cand=s.array), _NOTHING
            return self._checked(s, i, th, loc.cand)
        if pc == "read_slot":
            v = self._read(s, i, loc.circle, loc.t)
            if late:
                result = v if loc.ok else NONE
                if self.hazard:
                    return self._goto(s, i, th, "drop_final", v=v), _NOTHING
                return self._respond(s, i, th, result)
            return self._goto(s, i, th, "drop" if self.hazard else "cas", v=v), _NOTHING
        if pc == "drop":
            return self._goto(s._replace(hazards=_put(s.hazards, i, None)), i, th, "cas"), _NOTHING
        if pc == "drop_final":
            s = s._replace(hazards=_put(s.hazards, i, None))
            return self._respond(s, i, th, loc.v if loc.ok else NONE)
        if pc == "cas":
            ok = s.top == loc.t
            if ok:
                s = s._replace(top=loc.t + 1)
            eff = _Effect(cas_top=loc.t if ok else None)
            if late:
                return self._goto(s, i, th, "read_slot", ok=ok), eff
            new, resp = self._respond(s, i, th, loc.v if ok else NONE)
            return new, resp._replace(cas_top=eff.cas_top)
        raise AssertionError(f"steal has no step {pc!r}")

    def _checked(self, s: ModelState, i: int, th: ThreadState, circle: int) -> tuple[ModelState, _Effect]:
        """The array is in hand; give up if the deque looked empty."""
        loc = th.locals
        if loc.b <= loc.t:
            if self.hazard:
                s = s._replace(hazards=_put(s.hazards, i, None))
            return self._respond(s, i, th, NONE)
        nxt = "cas" if Fault.STEAL_READS_AFTER_CAS in self.faults else "read_slot"
        return self._goto(s, i, th, nxt, circle=circle), _NOTHING


def _put(seq: tuple, i: int, value) -> tuple:
    return seq[:i] + (value,) + seq[i + 1:]


# ── Replay ────────────────────────────────────────────────────────────────────

class _Recorder:
    """Turns model effects into a History and an oracle trace."""

    def __init__(self, model: Model, state: ModelState):
        self.model   = model
        self.clock   = 0
        self.invoked: dict[int, int] = {}
        self.events: list[Event]    = []
        self.trace: list[AuthState] = [state.auth()]
        self.cas_wins: list[int]    = []

    def note(self, i: int, before: ModelState, eff: _Effect) -> None:
        self.clock += 1
        if eff.invoked:
            self.invoked[i] = self.clock
        if eff.auth is not None:
            self.trace.append(eff.auth)
        if eff.cas_top is not None:
            if eff.cas_top in self.cas_wins:
                raise ModelViolation("cas", f"CAS {eff.cas_top} -> {eff.cas_top + 1} succeeded twice")
            self.cas_wins.append(eff.cas_top)
        if eff.response is not None:
            op = self.model.ops[i][before.threads[i].op_index]
            result = None if eff.response in (UNIT, NONE) else eff.response
            self.events.append(Event(self.model.names[i], op.kind, op.arg, self.invoked.pop(i), self.clock, result))


def _run(program: Program, schedule: Sequence[str]) -> tuple[Model, ModelState, _Recorder]:
    model = Model(program)
    state = model.blank()
    rec = _Recorder(model, state)
    try:
        while model._preloading(state):
            nxt, eff = model.advance(state, 0)
            rec.note(0, state, eff)
            state = nxt
        for pos, name in enumerate(schedule):
            try:
                i = model.names.index(name)
            except ValueError:
                raise ScheduleError(pos, name, "no such thread") from None
            if i not in model.runnable(state):
                raise ScheduleError(pos, name, "thread has no steps left")
            nxt, eff = model.advance(state, i)
            rec.note(i, state, eff)
            state = nxt
    except ModelViolation as exc:
        exc.history  = History(list(rec.events), state.drain())
        exc.trace    = list(rec.trace)
        exc.schedule = list(schedule)
        raise
    return model, state, rec


def replay(schedule: Sequence[str], program: Program) -> tuple[History, list[AuthState]]:
    """Re-run ``schedule`` deterministically. ModelViolation carries the partial history."""
    _, state, rec = _run(program, schedule)
    return History(rec.events, state.drain()), rec.trace


# ── Exploration ───────────────────────────────────────────────────────────────

@dataclass
class Limits:
    max_states:     int = 2_000_000
    max_depth:      int = 400
    lincheck_bound: int = DEFAULT_BOUND


@dataclass
class Report:
    interleavings:  int                 = 0
    states:         int                 = 0
    outcomes:       dict[str, int]      = field(default_factory=dict)
    passed:         bool                = True
    complete:       bool                = True
    counterexample: list[str] | None    = None
    violation:      str | None          = None

    def to_json(self) -> dict:
        return {
            "interleavings":  self.interleavings,
            "states":         self.states,
            "outcomes":       self.outcomes,
            "passed":         self.passed,
            "complete":       self.complete,
            "counterexample": self.counterexample,
            "violation":      self.violation,
        }


class _Abort(Exception):
    pass


def explore(program: Program | Mapping[str, Sequence[str]], limits: Limits | None = None) -> Report:
    """Visit every schedule of ``program`` (merging equal states) and check each one."""
    if not isinstance(program, Program):
        program = Program({name: tuple(Op.parse(s) for s in ops) for name, ops in program.items()})
    limits = limits or Limits()
    model = Model(program)
    report = Report()
    memo: dict[ModelState, dict[str, int]] = {}
    path: list[int] = []
    skip = len(program.preload)

    def fail(exc: ModelViolation) -> None:
        report.passed = False
        report.violation = str(exc)
        report.counterexample = [model.names[i] for i in path]
        log.warning("Violation after %d steps: %s", len(path), exc)
        raise _Abort

    def finish(state: ModelState) -> dict[str, int]:
        drain = state.drain()
        if not any(items == tuple(drain) for items, _ in state.frontier):
            fail(ModelViolation("linearizability", f"final contents {drain} match no order"))
        if any(h is not None for h in state.hazards):
            fail(ModelViolation("shield", "a steal finished without dropping its protection"))
        schedule = [model.names[i] for i in path]
        try:
            history, trace = replay(schedule, program)
        except ModelViolation as exc:
            fail(exc)
        if not check_conservation(history):
            fail(ModelViolation("conservation", "pushed values were lost or duplicated"))
        try:
            ok, _ = is_linearizable(history, limits.lincheck_bound)
        except LinearizabilityBoundError:
            ok = True   # the frontier check above already covered it
        if not ok:
            fail(ModelViolation("linearizability", "replayed history is not linearizable"))
        verdict = validate_trace(trace)
        if not verdict.passed:
            fail(ModelViolation("oracle", verdict.violation or "trace rejected"))
        outcome = {name: [str(r) for r in th.results[skip if name == OWNER else 0:]]
                   for name, th in zip(model.names, state.threads)}
        outcome["drain"] = drain
        return {json.dumps(outcome, sort_keys=True): 1}

    def visit(state: ModelState, depth: int) -> dict[str, int]:
        cached = memo.get(state)
        if cached is not None:
            return cached
        if len(memo) >= limits.max_states or depth > limits.max_depth:
            report.complete = False
            return {}
        runnable = model.runnable(state)
        if not runnable:
            result = finish(state)
        else:
            result: dict[str, int] = {}
            for i in runnable:
                path.append(i)
                try:
                    nxt, _ = model.advance(state, i)
                except ModelViolation as exc:
                    fail(exc)
                for key, count in visit(nxt, depth + 1).items():
                    result[key] = result.get(key, 0) + count
                path.pop()
        memo[state] = result
        return result

    try:
        root = model.initial()
    except ModelViolation as exc:
        return Report(passed=False, complete=False, counterexample=[], violation=str(exc))
    try:
        outcomes = visit(root, 0)
    except _Abort:
        outcomes = {}
        report.complete = False
    report.outcomes = outcomes
    report.interleavings = sum(outcomes.values())
    report.states = len(memo)
    log.info("Explored %d interleavings over %d states (%s)", report.interleavings, report.states,
             "pass" if report.passed else "FAIL")
    return report

"""
core/deque.py - The Chase-Lev work-stealing deque.

The shared part is three atomic cells: top, bottom and the current array.
new_deque() hands out exactly one OwnerHandle (push/pop, sole writer of
bottom and of the array pointer) and a StealerHandle that may be cloned
freely and only steals. Indices start at 1; top only ever grows.

Old arrays are kept until the deque closes (Reclamation.KEEP_ALL) or retired
into a hazard-pointer Domain right after the grown array is published
(Reclamation.HAZARD), in which case every steal protects the array it reads.
"""

import enum
import logging
import threading
from collections.abc import Callable, Iterable

from core.atomics import AtomicCell
from core.errors import UsageError
from core.reclamation import DEFAULT_SCAN_THRESHOLD, Domain, Shield
from core.ring_buffer import RingBuffer
from core.state_oracle import AuthState

log = logging.getLogger(__name__)

# (state, kind_hint, write) -> None; see state_oracle.TraceRecorder.
TraceSink = Callable[[AuthState, "str | None", "tuple[int, int] | None"], None]


class Reclamation(enum.Enum):
    KEEP_ALL = "keepall"
    HAZARD   = "hazard"


class Fault(enum.Enum):
    """Deliberate bugs, for showing that the checkers notice them."""

    POP_READS_TOP_FIRST   = "pop-reads-top-first"     # top read before bottom is decremented
    STEAL_READS_AFTER_CAS = "steal-reads-after-cas"   # arr[t] read after claiming t
    POP_SKIPS_CAS         = "pop-skips-cas"           # last element taken without the CAS
    RETIRE_BEFORE_PUBLISH = "retire-before-publish"   # old array retired while still published
    SKIP_EMPTY_RESTORE    = "skip-empty-restore"      # empty pop leaves bottom at t - 1


# ── Instrumentation ───────────────────────────────────────────────────────────

class _Quiet:
    """Stand-in used when no sink is attached: no lock, no records."""

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def emit(self, hint, write=None, bottom=None):
        pass


_QUIET = _Quiet()


class _Tracer:
    """
    Serialises every authoritative transition with its record. ``auth_bottom``
    is the bottom the owner means: while a pop has decremented the physical
    bottom but not yet decided, it keeps the pre-decrement value.
    """

    def __init__(self, shared: "DequeShared", sink: TraceSink):
        self._shared     = shared
        self._sink       = sink
        self._lock       = threading.Lock()
        self.auth_bottom = shared.bottom.get()

    def __enter__(self):
        self._lock.acquire()
        return self

    def __exit__(self, *exc):
        self._lock.release()
        return False

    def emit(self, hint: str, write: tuple[int, int] | None = None, bottom: int | None = None) -> None:
        if bottom is not None:
            self.auth_bottom = bottom
        shared = self._shared
        buf = shared.array.get()
        state = AuthState(shared.era, buf.ident, buf.snapshot(), shared.top.get(), self.auth_bottom)
        self._sink(state, hint, write)


# ── Shared state ──────────────────────────────────────────────────────────────

class DequeShared:
    """top, bottom and the array pointer, plus per-deque settings."""

    def __init__(self, buffer: RingBuffer, reclamation: Reclamation,
                 domain: Domain | None, faults: frozenset[Fault]):
        self.top         = AtomicCell(1)
        self.bottom      = AtomicCell(1)
        self.array: AtomicCell[RingBuffer] = AtomicCell(buffer)
        self.era         = 0            # owner-written; read under the trace lock
        self.reclamation = reclamation
        self.domain      = domain
        self.faults      = faults
        self.trace: _Tracer | _Quiet = _QUIET
        self.owned       = False

    def size_hint(self) -> int:
        # bottom first: top only grows, so b - t never exceeds the size when b was read
        b = self.bottom.get()
        t = self.top.get()
        return max(b - t, 0)


def new_deque(
    initial_capacity: int,
    *,
    reclamation: Reclamation = Reclamation.KEEP_ALL,
    domain: Domain | None = None,
    sink: TraceSink | None = None,
    faults: Iterable[Fault] = (),
) -> tuple["OwnerHandle", "StealerHandle"]:
    """Create an empty deque (t = b = 1) over a zero-filled array."""
    if initial_capacity < 1:
        raise UsageError(f"initial capacity must be >= 1, got {initial_capacity}")
    buffer = RingBuffer(initial_capacity)
    if reclamation is Reclamation.HAZARD:
        domain = domain or Domain(DEFAULT_SCAN_THRESHOLD)
        domain.manage(buffer)
    else:
        domain = None
    shared = DequeShared(buffer, reclamation, domain, frozenset(faults))
    if sink is not None:
        shared.trace = _Tracer(shared, sink)
        with shared.trace as tr:
            tr.emit("alloc")
    return OwnerHandle(shared), StealerHandle(shared)


# ── Owner ─────────────────────────────────────────────────────────────────────

class OwnerHandle:
    """
    The only capability that may push, pop, write bottom or replace the
    array. Not safe to use from two threads at once; may be handed over.
    """

    def __init__(self, shared: DequeShared):
        if shared.owned:
            raise UsageError("deque already has an owner")
        shared.owned = True
        self.shared        = shared
        self.cached_bottom = shared.bottom.get()
        self.cached_buffer = shared.array.get()
        self.grows         = 0
        self._retained: list[RingBuffer] = []
        self._closed       = False

    def push(self, v: int) -> None:
        shared = self.shared
        b = self.cached_bottom
        t = shared.top.get()
        buf = self.cached_buffer
        if t + buf.capacity <= b + 1:
            buf = self._grow(buf, t, b)
        with shared.trace as tr:
            buf.set(b, v)
            tr.emit("write", write=(b, v))
        with shared.trace as tr:
            shared.bottom.set(b + 1)
            tr.emit("push", bottom=b + 1)
        self.cached_bottom = b + 1

    def _grow(self, old: RingBuffer, t: int, b: int) -> RingBuffer:
        shared = self.shared
        new = old.grow(t, b)
        if shared.domain is not None:
            shared.domain.manage(new)
        early = Fault.RETIRE_BEFORE_PUBLISH in shared.faults
        if early:
            self._dispose(old)
        with shared.trace as tr:
            shared.era += 1
            shared.array.set(new)
            tr.emit("archive")
        if not early:
            self._dispose(old)
        self.cached_buffer = new
        self.grows += 1
        log.debug("Grew array %d -> %d slots (t=%d, b=%d)", old.capacity, new.capacity, t, b)
        return new

    def _dispose(self, old: RingBuffer) -> None:
        if self.shared.domain is not None:
            self.shared.domain.retire(old, old.capacity, old.free)
        else:
            self._retained.append(old)

    def pop(self) -> int | None:
        shared = self.shared
        faults = shared.faults
        b = self.cached_bottom - 1
        buf = self.cached_buffer
        if Fault.POP_READS_TOP_FIRST in faults:
            t = shared.top.get()
            shared.bottom.set(b)
            with shared.trace as tr:
                if t < b:
                    tr.emit("pop", bottom=b)
        else:
            shared.bottom.set(b)
            with shared.trace as tr:
                t = shared.top.get()
                if t < b:
                    tr.emit("pop", bottom=b)

        if b < t:
            # empty: put bottom back
            if Fault.SKIP_EMPTY_RESTORE in faults:
                self.cached_bottom = b
            else:
                shared.bottom.set(t)
                self.cached_bottom = t
            return None

        v = buf.get(b)
        if t < b:
            self.cached_bottom = b
            return v

        # one element left: race the stealers for it
        if Fault.POP_SKIPS_CAS in faults:
            ok = True
        else:
            with shared.trace as tr:
                ok = shared.top.compare_and_set(t, t + 1)
                if ok:
                    tr.emit("cas_top")
        shared.bottom.set(t + 1)
        self.cached_bottom = t + 1
        return v if ok else None

    def drain(self) -> list[int]:
        """Take every remaining element from the top end, oldest first."""
        shared = self.shared
        out: list[int] = []
        while True:
            t = shared.top.get()
            if self.cached_bottom <= t:
                return out
            v = self.cached_buffer.get(t)
            with shared.trace as tr:
                ok = shared.top.compare_and_set(t, t + 1)
                if ok:
                    tr.emit("cas_top")
            if ok:
                out.append(v)

    def size_hint(self) -> int:
        return self.shared.size_hint()

    def stealer(self) -> "StealerHandle":
        return StealerHandle(self.shared)

    def close(self) -> list[int]:
        """
        Destroy the deque: drain it and free every array. Stealers must be
        quiescent. Returns the drained values.
        """
        if self._closed:
            return []
        drained = self.drain()
        shared = self.shared
        current = self.cached_buffer
        if shared.domain is not None:
            shared.domain.retire(current, current.capacity, current.free)
            freed = shared.domain.scan()
            left = shared.domain.stats.retired
            if left:
                log.warning("Deque closed with %d retired array(s) still protected", left)
            log.debug("Close freed %d array(s)", freed)
        else:
            for buf in self._retained:
                buf.free()
            current.free()
            self._retained.clear()
        self._closed = True
        return drained


# ── Stealers ──────────────────────────────────────────────────────────────────

class StealerHandle:
    """
    Steal-only capability. Clone one per thread; a handle (and its shield)
    is used by one thread at a time.
    """

    def __init__(self, shared: DequeShared):
        self.shared = shared
        self.shield: Shield | None = shared.domain.shield_new() if shared.domain is not None else None
        self.last_top        = 0
        self.top_regressions = 0
        self._closed         = False

    def clone(self) -> "StealerHandle":
        return StealerHandle(self.shared)

    def steal(self) -> int | None:
        shared = self.shared
        if self._closed:
            raise UsageError("steal on a closed stealer handle")
        shield = self.shield
        t = shared.top.get()
        if t < self.last_top:
            self.top_regressions += 1
        self.last_top = t
        b = shared.bottom.get()
        buf = shield.protect(shared.array) if shield is not None else shared.array.get()
        if b <= t:
            if shield is not None:
                shield.drop()
            return None

        if Fault.STEAL_READS_AFTER_CAS in shared.faults:
            ok = self._claim(t)
            try:
                v = buf.get(t)
            finally:
                if shield is not None:
                    shield.drop()
            return v if ok else None

        # read arr[t] before claiming it: once t moves the slot may be reused
        try:
            v = buf.get(t)
        finally:
            if shield is not None:
                shield.drop()
        return v if self._claim(t) else None

    def _claim(self, t: int) -> bool:
        with self.shared.trace as tr:
            ok = self.shared.top.compare_and_set(t, t + 1)
            if ok:
                tr.emit("cas_top")
        return ok

    def size_hint(self) -> int:
        return self.shared.size_hint()

    def close(self) -> None:
        if self.shield is not None:
            self.shared.domain.shield_release(self.shield)
            self.shield = None
        self._closed = True


def size_hint(handle: "OwnerHandle | StealerHandle") -> int:
    """Advisory element count, max(b - t, 0); stale as soon as it returns."""
    return handle.size_hint()

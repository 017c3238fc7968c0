"""
core/ring_buffer.py - The circular array under the deque.

Logical indices are unbounded non-negative integers; every access lands on
slot ``i % capacity``. Growing never resizes in place: it returns a fresh
buffer twice as large holding the same circular slice.
"""

import itertools
from collections.abc import Sequence

from core.errors import UsageError, UseAfterFreeError

FILL = 0

_idents = itertools.count(1)


def grow_slots(slots: Sequence[int], t: int, b: int) -> list[int]:
    """
    Copy the circular slice [t, b) of ``slots`` into a zero-filled list of
    twice the length. Shared by RingBuffer.grow, the explorer model and the
    trace reader so all three agree on what a grow produces.
    """
    n = len(slots)
    if not t <= b < t + n:
        raise UsageError(f"grow needs t <= b < t + capacity, got t={t} b={b} capacity={n}")
    nn = 2 * n
    out = [FILL] * nn
    for i in range(t, b):
        out[i % nn] = slots[i % n]
    return out


class RingBuffer:
    """
    Fixed-capacity circular array of machine words.

    Single list item loads and stores are atomic in CPython (and in the
    free-threaded build), so each slot access is one indivisible event even
    without a lock. At most one thread writes; any number may read.
    """

    __slots__ = ("_slots", "capacity", "ident")

    def __init__(self, capacity: int, fill: int = FILL):
        if capacity < 1:
            raise UsageError(f"capacity must be >= 1, got {capacity}")
        self._slots: list[int] | None = [fill] * capacity
        self.capacity = capacity
        self.ident    = next(_idents)

    @classmethod
    def from_slots(cls, slots: Sequence[int]) -> "RingBuffer":
        buf = cls(len(slots))
        buf._slots = list(slots)
        return buf

    def get(self, i: int) -> int:
        slots = self._slots
        if slots is None:
            raise UseAfterFreeError(f"read of freed buffer #{self.ident} at index {i}")
        return slots[i % self.capacity]

    def set(self, i: int, v: int) -> None:
        slots = self._slots
        if slots is None:
            raise UseAfterFreeError(f"write to freed buffer #{self.ident} at index {i}")
        slots[i % self.capacity] = v

    def grow(self, t: int, b: int) -> "RingBuffer":
        """Return a new buffer of twice the capacity with L[t..b) = L'[t..b)."""
        return RingBuffer.from_slots(grow_slots(self.snapshot(), t, b))

    def snapshot(self) -> tuple[int, ...]:
        slots = self._slots
        if slots is None:
            raise UseAfterFreeError(f"snapshot of freed buffer #{self.ident}")
        return tuple(slots)

    def free(self) -> None:
        """Poison the buffer. Idempotent; later accesses raise UseAfterFreeError."""
        self._slots = None

    @property
    def freed(self) -> bool:
        return self._slots is None

    def __len__(self) -> int:
        return self.capacity

    def __repr__(self) -> str:
        state = "freed" if self._slots is None else list(self._slots)
        return f"RingBuffer(#{self.ident}, capacity={self.capacity}, {state})"

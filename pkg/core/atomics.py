"""
core/atomics.py - Sequentially consistent shared cells.

Python has no hardware CAS, so each cell serialises its accesses through its
own lock. Every access is therefore one indivisible, totally ordered event,
which is the SC memory model the deque is written against.
"""

import threading
from typing import Generic, TypeVar

T = TypeVar("T")


class AtomicCell(Generic[T]):
    """A single shared word: load, store, compare-and-set, fetch-and-add."""

    __slots__ = ("_value", "_lock")

    def __init__(self, initial: T):
        self._value = initial
        self._lock  = threading.Lock()

    def get(self) -> T:
        with self._lock:
            return self._value

    def set(self, value: T) -> None:
        with self._lock:
            self._value = value

    def compare_and_set(self, expect: T, update: T) -> bool:
        # Identity first so references compare by address, ints by value.
        with self._lock:
            current = self._value
            if current is expect or current == expect:
                self._value = update
                return True
            return False

    def get_and_add(self, delta: int) -> int:
        with self._lock:
            old = self._value
            self._value = old + delta
            return old

    def __repr__(self) -> str:
        return f"AtomicCell({self.get()!r})"

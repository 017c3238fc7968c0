"""
core/reclamation.py - Hazard-pointer reclamation for retired arrays.

A Domain owns a set of hazard slots (one per Shield) and a retired list.
Readers announce a pointer in their shield and re-check the source before
trusting it; writers retire a pointer once it can no longer be published and
a scan frees every retired pointer no slot announces.
"""

import logging
import threading
from collections.abc import Callable
from dataclasses import dataclass

from core.atomics import AtomicCell
from core.errors import UsageError

log = logging.getLogger(__name__)

DEFAULT_SCAN_THRESHOLD = 64


@dataclass(frozen=True)
class DomainStats:
    live:    int   # managed pointers not yet freed
    retired: int   # retired but still waiting for a scan
    freed:   int   # freed over the domain's lifetime


@dataclass
class _Retiree:
    ptr:     object
    size:    int
    deleter: Callable[[], None] | None


class Shield:
    """One hazard slot. Used by one thread at a time."""

    __slots__ = ("_domain", "_slot")

    def __init__(self, domain: "Domain"):
        self._domain = domain
        self._slot: AtomicCell[object | None] = AtomicCell(None)

    def protect(self, src: AtomicCell) -> object:
        """
        Load ``src`` and announce it until a re-read agrees. The returned
        pointer was the value of ``src`` at the moment of validation and stays
        unfreed until drop() or the next protect().
        """
        ptr = src.get()
        while True:
            self._slot.set(ptr)
            current = src.get()
            if current is ptr:
                return ptr
            ptr = current

    def drop(self) -> None:
        self._slot.set(None)

    @property
    def protected(self) -> object | None:
        return self._slot.get()


class Domain:
    """
    Hazard slots plus the retired list.

    retire() appends and triggers a scan once the list reaches the
    threshold; close() runs a final scan and refuses if anything is still
    protected.
    """

    def __init__(self, scan_threshold: int = DEFAULT_SCAN_THRESHOLD):
        if scan_threshold < 1:
            raise UsageError(f"scan threshold must be >= 1, got {scan_threshold}")
        self.scan_threshold = scan_threshold
        self._shields: list[Shield]   = []
        self._retired: list[_Retiree] = []
        self._lock      = threading.Lock()
        self._managed   = AtomicCell(0)
        self._freed     = AtomicCell(0)

    # ── Shields ───────────────────────────────────────────────────────────────
    def shield_new(self) -> Shield:
        shield = Shield(self)
        with self._lock:
            self._shields.append(shield)
        return shield

    def shield_release(self, shield: Shield) -> None:
        """Drop ``shield`` and stop scanning its slot."""
        shield.drop()
        with self._lock:
            self._shields = [s for s in self._shields if s is not shield]

    @property
    def shield_count(self) -> int:
        with self._lock:
            return len(self._shields)

    def _hazards(self) -> set[int]:
        with self._lock:
            shields = list(self._shields)
        hazards = set()
        for shield in shields:
            ptr = shield.protected
            if ptr is not None:
                hazards.add(id(ptr))
        return hazards

    # ── Retire / scan ─────────────────────────────────────────────────────────
    def manage(self, ptr: object) -> object:
        """Count ``ptr`` as live under this domain; returns it unchanged."""
        self._managed.get_and_add(1)
        return ptr

    def retire(self, ptr: object, size: int, deleter: Callable[[], None] | None = None) -> None:
        with self._lock:
            assert all(r.ptr is not ptr for r in self._retired), "pointer retired twice"
            self._retired.append(_Retiree(ptr, size, deleter))
            due = len(self._retired) >= self.scan_threshold
        if due:
            freed = self.scan()
            log.debug("Threshold scan freed %d of %d retired", freed, self.scan_threshold)

    def scan(self) -> int:
        """Free every retired pointer no hazard slot holds. Returns how many."""
        # swap the retired list out before reading the slots; anything retired
        # after the swap waits for the next scan
        with self._lock:
            retired, self._retired = self._retired, []
        hazards = self._hazards()
        keep, free = [], []
        for r in retired:
            (keep if id(r.ptr) in hazards else free).append(r)
        if keep:
            with self._lock:
                self._retired.extend(keep)
        for r in free:
            if r.deleter is not None:
                r.deleter()
        self._freed.get_and_add(len(free))
        return len(free)

    def close(self) -> int:
        """Final scan. Every shield must have dropped its protection."""
        hazards = self._hazards()
        if hazards:
            raise UsageError(f"domain closed with {len(hazards)} pointer(s) still protected")
        return self.scan()

    @property
    def stats(self) -> DomainStats:
        with self._lock:
            retired = len(self._retired)
        freed = self._freed.get()
        return DomainStats(live=self._managed.get() - freed, retired=retired, freed=freed)

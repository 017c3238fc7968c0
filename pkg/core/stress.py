"""
core/stress.py - Live multi-threaded stress runs against the real deque.

One owner pushes every value 1..ops (popping now and then, as chosen by a
seeded generator) while the stealers steal until the owner is done and the
deque is empty. Every operation is stamped into a History; afterwards the
run is judged on conservation, per-stealer top monotonicity and, in hazard
mode, on what the reclamation domain has left behind.
"""

import concurrent.futures
import logging
import os
import random
import threading
from dataclasses import asdict, dataclass, field

from core.config import RunConfig
from core.deque import OwnerHandle, Reclamation, StealerHandle, new_deque
from core.errors import UseAfterFreeError
from core.lincheck import HistoryRecorder, OpKind, check_conservation, check_sequential, write_history
from core.reclamation import Domain
from core.state_oracle import TraceRecorder

log = logging.getLogger(__name__)

OWNER = "owner"


@dataclass
class StressResult:
    passed:          bool       = True
    pushes:          int        = 0
    pops:            int        = 0
    steals:          int        = 0
    empty_takes:     int        = 0
    drained:         int        = 0
    grows:           int        = 0
    reclaims:        int        = 0
    top_regressions: int        = 0
    live_arrays:     int | None = None
    violations:      list[str]  = field(default_factory=list)
    history_path:    str | None = None
    trace_path:      str | None = None

    def fail(self, message: str) -> None:
        self.passed = False
        self.violations.append(message)
        log.warning("Stress violation: %s", message)

    def to_json(self) -> dict:
        return asdict(self)


class StressRunner:
    """Owns one run. cancel() may be called from any thread."""

    def __init__(self, cfg: RunConfig, *, trace: bool = False):
        self.cfg     = cfg.validate()
        self.trace   = TraceRecorder() if trace else None
        self._cancel = False
        self._done   = threading.Event()

    def cancel(self):
        self._cancel = True

    # ── Workers ──────────────────────────────────────────────────────────────
    def _owner_worker(self, owner: OwnerHandle, lane) -> tuple[int, int, int]:
        cfg = self.cfg
        rng = random.Random(cfg.seed)
        pushes = pops = empty = 0
        try:
            while pushes < cfg.ops and not self._cancel:
                if rng.random() < cfg.pop_ratio:
                    stamp = lane.invoke()
                    v = owner.pop()
                    lane.respond(OpKind.POP, None, stamp, v)
                    if v is None:
                        empty += 1
                    else:
                        pops += 1
                else:
                    pushes += 1
                    stamp = lane.invoke()
                    owner.push(pushes)
                    lane.respond(OpKind.PUSH, pushes, stamp, None)
        finally:
            self._done.set()
        return pushes, pops, empty

    def _stealer_worker(self, stealer: StealerHandle, lane) -> tuple[int, int]:
        steals = empty = 0
        try:
            while not self._cancel:
                finished = self._done.is_set()
                stamp = lane.invoke()
                v = stealer.steal()
                lane.respond(OpKind.STEAL, None, stamp, v)
                if v is not None:
                    steals += 1
                    continue
                empty += 1
                if finished and stealer.size_hint() == 0:
                    break
        finally:
            stealer.close()
        return steals, empty

    # ── Run ──────────────────────────────────────────────────────────────────
    def run(self, history_path: str | os.PathLike | None = None,
            trace_path: str | os.PathLike | None = None) -> StressResult:
        cfg = self.cfg
        result = StressResult()
        domain = Domain(cfg.scan_threshold) if cfg.mode is Reclamation.HAZARD else None
        owner, first = new_deque(cfg.capacity, reclamation=cfg.mode, domain=domain,
                                 sink=self.trace, faults=cfg.faults)
        stealers = [first] + [first.clone() for _ in range(cfg.threads - 2)] if cfg.threads > 1 else []
        recorder = HistoryRecorder()
        owner_lane = recorder.lane(OWNER)
        lanes = [recorder.lane(f"s{i + 1}") for i in range(len(stealers))]
        log.info("Stress: %d thread(s), %d pushes, capacity %d, %s mode",
                 cfg.threads, cfg.ops, cfg.capacity, cfg.mode.value)

        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as executor:
            futures = {executor.submit(self._owner_worker, owner, owner_lane): OWNER}
            for stealer, lane in zip(stealers, lanes):
                futures[executor.submit(self._stealer_worker, stealer, lane)] = lane.thread

            for future in concurrent.futures.as_completed(futures):
                name = futures[future]
                try:
                    counts = future.result()
                except UseAfterFreeError as exc:
                    self.cancel()
                    result.fail(f"use-after-free in {name}: {exc}")
                    continue
                except Exception as exc:
                    self.cancel()
                    result.fail(f"{name} crashed: {exc!r}")
                    continue
                if name == OWNER:
                    result.pushes, result.pops, owner_empty = counts
                    result.empty_takes += owner_empty
                else:
                    result.steals += counts[0]
                    result.empty_takes += counts[1]

        result.grows = owner.grows
        result.top_regressions = sum(s.top_regressions for s in stealers)
        if result.top_regressions:
            result.fail(f"stealers saw top move backwards {result.top_regressions} time(s)")

        if domain is not None:
            domain.scan()
            result.live_arrays = domain.stats.live
            if result.live_arrays != 1:
                result.fail(f"{result.live_arrays} arrays live after the final scan, expected 1")

        try:
            drained = owner.close()
        except UseAfterFreeError as exc:
            result.fail(f"use-after-free while draining: {exc}")
            drained = []
        result.drained = len(drained)
        if domain is not None:
            result.reclaims = domain.stats.freed

        history = recorder.history(drained)
        if not check_conservation(history):
            result.fail("conservation: pushed values were lost or taken twice")
        if cfg.threads == 1 and not check_sequential(history):
            result.fail("sequential run diverged from the list model")

        if self.trace is not None:
            report = self.trace.validate()
            if not report.passed:
                result.fail(f"trace rejected at state {report.failed_at}: {report.violation}")
            if trace_path is not None:
                self.trace.dump(trace_path)
                result.trace_path = os.fspath(trace_path)

        if not result.passed and history_path is not None:
            write_history(history_path, history)
            result.history_path = os.fspath(history_path)
            log.info("History written to %s", history_path)

        log.info("Stress %s: %d pushes, %d pops, %d steals, %d drained, %d grows",
                 "passed" if result.passed else "FAILED",
                 result.pushes, result.pops, result.steals, result.drained, result.grows)
        return result


def run_stress(cfg: RunConfig, history_path: str | os.PathLike | None = None, *,
               trace_path: str | os.PathLike | None = None) -> StressResult:
    runner = StressRunner(cfg, trace=trace_path is not None)
    return runner.run(history_path, trace_path)

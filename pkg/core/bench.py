"""
core/bench.py - Throughput workloads. Informational numbers only.
"""

import concurrent.futures
import logging
import random
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass

import psutil

from core.config import RunConfig
from core.deque import Reclamation, new_deque
from core.reclamation import Domain

log = logging.getLogger(__name__)

PUSH_POP    = "push-pop"
STEAL_HEAVY = "steal-heavy"


@dataclass
class BenchLine:
    workload:    str
    mode:        str
    threads:     int
    ops:         int
    seconds:     float
    ops_per_sec: float
    plan:        dict[str, int]

    def to_json(self) -> dict:
        return asdict(self)


def plan(seed: int, ops: int, pop_ratio: float) -> list[bool]:
    """The owner's script: True for push, False for pop. Same seed, same script."""
    rng = random.Random(seed)
    return [rng.random() >= pop_ratio for _ in range(ops)]


def plan_counts(script: list[bool]) -> dict[str, int]:
    c = Counter(script)
    return {"push": c[True], "pop": c[False]}


def _domain(cfg: RunConfig, mode: Reclamation) -> Domain | None:
    return Domain(cfg.scan_threshold) if mode is Reclamation.HAZARD else None


def bench_push_pop(cfg: RunConfig, mode: Reclamation) -> BenchLine:
    script = plan(cfg.seed, cfg.ops, cfg.pop_ratio)
    owner, _ = new_deque(cfg.capacity, reclamation=mode, domain=_domain(cfg, mode))
    push, pop = owner.push, owner.pop
    start = time.perf_counter()
    for i, is_push in enumerate(script):
        if is_push:
            push(i)
        else:
            pop()
    elapsed = time.perf_counter() - start
    owner.close()
    return BenchLine(PUSH_POP, mode.value, 1, cfg.ops, elapsed, cfg.ops / max(elapsed, 1e-9), plan_counts(script))


def bench_steal_heavy(cfg: RunConfig, mode: Reclamation) -> BenchLine:
    """The owner only pushes; threads - 1 stealers empty the deque."""
    owner, stealer = new_deque(cfg.capacity, reclamation=mode, domain=_domain(cfg, mode))
    stealers = [stealer] + [stealer.clone() for _ in range(cfg.threads - 2)]
    done = threading.Event()

    def steal_loop(handle) -> int:
        taken = 0
        while True:
            finished = done.is_set()
            if handle.steal() is not None:
                taken += 1
            elif finished and handle.size_hint() == 0:
                break
        handle.close()
        return taken

    start = time.perf_counter()
    with concurrent.futures.ThreadPoolExecutor(max_workers=len(stealers)) as executor:
        futures = [executor.submit(steal_loop, s) for s in stealers]
        for v in range(cfg.ops):
            owner.push(v)
        done.set()
        taken = sum(f.result() for f in concurrent.futures.as_completed(futures))
    elapsed = time.perf_counter() - start
    owner.close()
    total = cfg.ops + taken
    return BenchLine(STEAL_HEAVY, mode.value, cfg.threads, total, elapsed, total / max(elapsed, 1e-9),
                     {"push": cfg.ops, "steal": taken})


def host_info() -> dict:
    proc = psutil.Process()
    return {
        "cpu_count": psutil.cpu_count(logical=True),
        "rss_bytes": proc.memory_info().rss,
    }


def run_bench(cfg: RunConfig, modes: list[Reclamation]) -> list[BenchLine]:
    cfg.validate()
    lines: list[BenchLine] = []
    for mode in modes:
        lines.append(bench_push_pop(cfg, mode))
        if cfg.threads > 1:
            lines.append(bench_steal_heavy(cfg, mode))
    for line in lines:
        log.info("%-12s %-8s %12.0f ops/s", line.workload, line.mode, line.ops_per_sec)
    return lines

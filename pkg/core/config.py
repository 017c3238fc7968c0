"""
core/config.py - QSettings-based configuration for the deque workbench.
"""

import os
from dataclasses import dataclass, field

from PySide6.QtCore import QSettings

from core.deque import Fault, Reclamation
from core.errors import UsageError

SCAN_THRESHOLD_ENV = "CLDEQUE_SCAN_THRESHOLD"


def _as_int(value, default: int) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


class AppConfig:
    """Typed wrapper around QSettings for all persistent settings."""

    ORG  = "ChaseLevWorkbench"
    APP  = "cldeque"

    def __init__(self, path: str | os.PathLike | None = None):
        if path is not None:
            self._s = QSettings(os.fspath(path), QSettings.Format.IniFormat)
        else:
            self._s = QSettings(self.ORG, self.APP)

    # ── Reclamation ───────────────────────────────────────────────────────────
    @property
    def scan_threshold(self) -> int:
        env = os.environ.get(SCAN_THRESHOLD_ENV)
        if env:
            value = _as_int(env, 0)
            if value < 1:
                raise UsageError(f"{SCAN_THRESHOLD_ENV} must be a positive integer, got {env!r}")
            return value
        return _as_int(self._s.value("reclamation/scan_threshold", 64), 64)

    @scan_threshold.setter
    def scan_threshold(self, v: int):
        self._s.setValue("reclamation/scan_threshold", v)

    # ── Deque ─────────────────────────────────────────────────────────────────
    @property
    def initial_capacity(self) -> int:
        return _as_int(self._s.value("deque/initial_capacity", 2), 2)

    @initial_capacity.setter
    def initial_capacity(self, v: int):
        self._s.setValue("deque/initial_capacity", v)

    # ── Exploration ───────────────────────────────────────────────────────────
    @property
    def max_states(self) -> int:
        return _as_int(self._s.value("explore/max_states", 2_000_000), 2_000_000)

    @max_states.setter
    def max_states(self, v: int):
        self._s.setValue("explore/max_states", v)

    @property
    def max_depth(self) -> int:
        return _as_int(self._s.value("explore/max_depth", 400), 400)

    @max_depth.setter
    def max_depth(self, v: int):
        self._s.setValue("explore/max_depth", v)

    @property
    def lincheck_bound(self) -> int:
        return _as_int(self._s.value("explore/lincheck_bound", 12), 12)

    @lincheck_bound.setter
    def lincheck_bound(self, v: int):
        self._s.setValue("explore/lincheck_bound", v)

    # ── Stress ────────────────────────────────────────────────────────────────
    @property
    def stress_threads(self) -> int:
        return _as_int(self._s.value("stress/threads", 5), 5)

    @stress_threads.setter
    def stress_threads(self, v: int):
        self._s.setValue("stress/threads", v)

    @property
    def stress_ops(self) -> int:
        return _as_int(self._s.value("stress/ops", 100_000), 100_000)

    @stress_ops.setter
    def stress_ops(self, v: int):
        self._s.setValue("stress/ops", v)

    @property
    def history_dump(self) -> str:
        return self._s.value("stress/history_dump", "stress-history.jsonl", str)

    @history_dump.setter
    def history_dump(self, v: str):
        self._s.setValue("stress/history_dump", v)

    # ── Advanced ──────────────────────────────────────────────────────────────
    @property
    def log_level(self) -> str:
        return self._s.value("advanced/log_level", "INFO", str)

    @log_level.setter
    def log_level(self, v: str):
        self._s.setValue("advanced/log_level", v)

    # ── Helpers ───────────────────────────────────────────────────────────────
    def sync(self):
        """Force flush to disk."""
        self._s.sync()

    def reset(self):
        self._s.clear()
        self._s.sync()


@dataclass
class RunConfig:
    """Parameters of one stress or bench run."""

    threads:        int                = 5
    ops:            int                = 100_000
    capacity:       int                = 2
    seed:           int                = 0
    mode:           Reclamation        = Reclamation.KEEP_ALL
    scan_threshold: int                = 64
    faults:         frozenset[Fault]   = field(default_factory=frozenset)
    pop_ratio:      float              = 0.25

    def validate(self) -> "RunConfig":
        for name in ("threads", "ops", "capacity", "scan_threshold"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError(f"seed must fit in 64 bits, got {self.seed}")
        if not 0.0 <= self.pop_ratio < 1.0:
            raise UsageError(f"pop ratio must be in [0, 1), got {self.pop_ratio}")
        return self

    @classmethod
    def from_settings(cls, config: AppConfig, **overrides) -> "RunConfig":
        base = cls(
            threads        = config.stress_threads,
            ops            = config.stress_ops,
            capacity       = config.initial_capacity,
            scan_threshold = config.scan_threshold,
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(base, key, value)
        return base.validate()

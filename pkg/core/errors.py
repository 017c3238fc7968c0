"""
core/errors.py - Exception hierarchy shared by every module.
"""


class DequeError(Exception):
    """Root of everything this package raises on purpose."""


class UsageError(DequeError, ValueError):
    """A caller broke a documented precondition."""


class UseAfterFreeError(DequeError):
    """A freed buffer was read or written."""


class TransitionError(DequeError):
    """A deque-state step matched no rule."""

    def __init__(self, rule: str, condition: str):
        super().__init__(f"{rule}: {condition}")
        self.rule      = rule
        self.condition = condition


class TraceParseError(DequeError):
    """A trace record could not be decoded."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"record {index}: {reason}")
        self.index  = index
        self.reason = reason


class HistoryError(DequeError):
    pass


class LinearizabilityBoundError(DequeError):
    """Exhaustive checking was refused because the history is too long."""


class ScheduleError(DequeError):
    """A replay schedule asked a thread to run when it could not."""

    def __init__(self, position: int, thread: str, reason: str):
        super().__init__(f"step {position} ({thread}): {reason}")
        self.position = position
        self.thread   = thread


class ModelViolation(DequeError):
    """A checked property failed inside the explorer model."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"[{kind}] {message}")
        self.kind     = kind
        self.message  = message
        self.history  = None
        self.trace    = None
        self.schedule = None

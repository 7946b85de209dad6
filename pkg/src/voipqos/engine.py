"""Discrete-event core: simulation clock, (time, seq)-ordered event queue and run driver."""

from __future__ import annotations

import enum
import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable


class SchedulingError(ValueError):
    """An event was scheduled before the current clock or at a non-finite time."""


class InvariantViolation(RuntimeError):
    """Internal consistency check failed during a run."""


class EventKind(enum.IntEnum):
    GENERATE_PACKET = 0
    LINK_ARRIVAL = 1
    TRANSMISSION_COMPLETE = 2
    SIMULATION_END = 3


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: EventKind
    payload: tuple = ()

    @property
    def key(self) -> tuple[float, int]:
        return (self.time, self.seq)


def check_time(t: float) -> float:
    if not (math.isfinite(t) and t >= 0):
        raise SchedulingError(f"simulation time must be finite and non-negative, got {t!r}")
    return t


class EventQueue:
    """Min-heap of events keyed by ``(time, seq)``.

    ``seq`` is assigned here, so events scheduled for the same instant pop in
    the order they were scheduled.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def schedule(self, time: float, kind: EventKind, payload: tuple = (), *, now: float = 0.0) -> Event:
        check_time(time)
        if time < now:
            raise SchedulingError(f"cannot schedule {kind.name} at t={time!r} before clock t={now!r}")
        ev = Event(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, (time, ev.seq, ev))
        return ev

    def peek_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[2]


Handler = Callable[["Engine", Event], None]


@dataclass
class Engine:
    """Single-threaded event loop. Handlers are registered per :class:`EventKind`."""

    handlers: dict[EventKind, Handler] = field(default_factory=dict)
    record_trace: bool = False

    def __post_init__(self) -> None:
        self.queue = EventQueue()
        self.clock = 0.0
        self.dispatched = 0
        self.trace: list[tuple[float, int, int, tuple]] = []

    def on(self, kind: EventKind, handler: Handler) -> None:
        self.handlers[kind] = handler

    def schedule(self, time: float, kind: EventKind, payload: tuple = ()) -> Event:
        return self.queue.schedule(time, kind, payload, now=self.clock)

    def run_until(self, end: float) -> float:
        """Dispatch every event with ``time <= end``; the clock finishes at ``end``.

        A SIMULATION_END event stops the run as soon as it is dispatched.
        """
        check_time(end)
        if end <= 0:
            raise SchedulingError("end time must be positive")
        if end < self.clock:
            raise SchedulingError(f"end {end!r} precedes clock {self.clock!r}")
        queue = self.queue
        handlers = self.handlers
        while queue:
            t = queue.peek_time()
            if t > end:
                break
            ev = queue.pop()
            if ev.time < self.clock:
                raise InvariantViolation("clock would move backwards")
            self.clock = ev.time
            self.dispatched += 1
            if self.record_trace:
                self.trace.append((ev.time, ev.seq, int(ev.kind), ev.payload))
            if ev.kind is EventKind.SIMULATION_END:
                return self.clock
            handler = handlers.get(ev.kind)
            if handler is None:
                raise InvariantViolation(f"no handler registered for {ev.kind.name}")
            handler(self, ev)
        self.clock = end
        return self.clock


def trace_digest(trace: list[tuple[float, int, int, tuple]]) -> str:
    h = hashlib.sha256()
    for t, seq, kind, payload in trace:
        h.update(f"{t!r}|{seq}|{kind}|{payload!r}\n".encode())
    return h.hexdigest()


__all__ = [
    "Engine",
    "Event",
    "EventKind",
    "EventQueue",
    "InvariantViolation",
    "SchedulingError",
    "check_time",
    "trace_digest",
]


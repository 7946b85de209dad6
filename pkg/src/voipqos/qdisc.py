"""Output-port queuing disciplines: FIFO, strict priority and weighted fair queuing.

All three share one surface::

    qd.enqueue(packet, now) -> Admission
    qd.dequeue(now) -> packet | None

Packets only need ``tos`` and ``size`` attributes. Arithmetic is written so
that feeding :class:`fractions.Fraction` times, rates and weights keeps every
intermediate exact; the WFQ conformance tests rely on that.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

N_TOS = 8
MAX_QUEUES = N_TOS

# tos 6-7 voice, 4-5 video, 2-3 ftp, 0-1 background; queue 0 is served first
DEFAULT_CLASSIFIER = (3, 3, 2, 2, 1, 1, 0, 0)
DEFAULT_WEIGHTS = (4, 3, 2, 1)
DEFAULT_FIFO_CAPACITY = 100
DEFAULT_CLASS_CAPACITY = 100


class Discipline(str, enum.Enum):
    FIFO = "fifo"
    PQ = "pq"
    WFQ = "wfq"


class Admission(enum.IntEnum):
    DROPPED = 0
    ACCEPTED = 1


class QdiscConfigError(ValueError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{f}: {m}" for f, m in problems))


@dataclass(frozen=True)
class QdiscConfig:
    discipline: Discipline = Discipline.FIFO
    capacity: int | None = DEFAULT_FIFO_CAPACITY
    class_capacity: tuple[int | None, ...] = (DEFAULT_CLASS_CAPACITY,) * 4
    classifier: tuple[int, ...] = DEFAULT_CLASSIFIER
    weights: tuple[Any, ...] = DEFAULT_WEIGHTS

    def __post_init__(self) -> None:
        object.__setattr__(self, "discipline", Discipline(self.discipline))
        object.__setattr__(self, "class_capacity", tuple(self.class_capacity))
        object.__setattr__(self, "classifier", tuple(self.classifier))
        object.__setattr__(self, "weights", tuple(self.weights))
        problems = self.problems()
        if problems:
            raise QdiscConfigError(problems)

    @property
    def n_queues(self) -> int:
        return 1 if self.discipline is Discipline.FIFO else len(self.class_capacity)

    def problems(self) -> list[tuple[str, str]]:
        """``(field, message)`` pairs, empty when the config is usable."""
        out = []
        if self.capacity is not None and self.capacity < 1:
            out.append(("capacity", "must be a positive packet count"))
        if len(self.classifier) != N_TOS:
            out.append(("classifier", f"must map all {N_TOS} ToS values"))
        nq = len(self.class_capacity)
        if not 1 <= nq <= MAX_QUEUES:
            out.append(("class_capacity", f"between 1 and {MAX_QUEUES} class queues required"))
        for i, c in enumerate(self.class_capacity):
            if c is not None and c < 1:
                out.append((f"class_capacity[{i}]", "must be positive"))
        for tos, q in enumerate(self.classifier):
            if not 0 <= q < nq:
                out.append((f"classifier[{tos}]", f"{q} is not a queue index below {nq}"))
        for i, w in enumerate(self.weights):
            if not w > 0:
                out.append((f"weights[{i}]", "must be strictly positive"))
        if self.discipline is Discipline.WFQ and len(self.weights) != nq:
            out.append(("weights", f"needs one entry per class queue ({nq})"))
        return out

    def classify(self, tos: int) -> int:
        if self.discipline is Discipline.FIFO:
            return 0
        return self.classifier[tos]


class Qdisc:
    """Common bookkeeping: per-queue buffers, occupancy, per-queue drop counters."""

    discipline: Discipline

    def __init__(self, n_queues: int, capacities: Sequence[int | None], classifier: Sequence[int]):
        self.queues: list[deque] = [deque() for _ in range(n_queues)]
        self.capacities = list(capacities)
        self.classifier = tuple(classifier)
        self.drops = [0] * n_queues
        self.accepted = 0
        self._buffered = 0

    def __len__(self) -> int:
        return self._buffered

    def classify(self, tos: int) -> int:
        return self.classifier[tos]

    def occupancy(self, q: int) -> int:
        return len(self.queues[q])

    def _admit(self, q: int) -> bool:
        cap = self.capacities[q]
        if cap is not None and len(self.queues[q]) >= cap:
            self.drops[q] += 1
            return False
        return True


class FifoQdisc(Qdisc):
    discipline = Discipline.FIFO

    def __init__(self, capacity: int | None = DEFAULT_FIFO_CAPACITY):
        super().__init__(1, [capacity], (0,) * N_TOS)

    def enqueue(self, packet, now) -> Admission:
        if not self._admit(0):
            return Admission.DROPPED
        self.queues[0].append(packet)
        self._buffered += 1
        self.accepted += 1
        return Admission.ACCEPTED

    def dequeue(self, now):
        if not self._buffered:
            return None
        self._buffered -= 1
        return self.queues[0].popleft()


class PriorityQdisc(Qdisc):
    """Strict priority across class queues (0 first), per-queue tail drop."""

    discipline = Discipline.PQ

    def enqueue(self, packet, now) -> Admission:
        q = self.classifier[packet.tos]
        if not self._admit(q):
            return Admission.DROPPED
        self.queues[q].append(packet)
        self._buffered += 1
        self.accepted += 1
        return Admission.ACCEPTED

    def dequeue(self, now):
        if not self._buffered:
            return None
        for buf in self.queues:
            if buf:
                self._buffered -= 1
                return buf.popleft()
        return None


class WfqQdisc(Qdisc):
    """Packetized GPS with virtual finish tags.

    The virtual clock tracks the fluid GPS reference system. A queue counts as
    GPS-backlogged while its last finish tag is ahead of the virtual time.
    Between breakpoints the clock advances at ``rate_bps / 8 / sum(weights of
    GPS-backlogged queues)`` (bytes per unit weight per second). Once both the
    buffers and the reference system are empty, the clock and all tags go back
    to zero.
    """

    discipline = Discipline.WFQ

    def __init__(
        self,
        rate_bps,
        weights: Sequence[Any],
        capacities: Sequence[int | None],
        classifier: Sequence[int],
    ):
        super().__init__(len(weights), capacities, classifier)
        self.weights = list(weights)
        self.rate_Bps = rate_bps / 8
        self.vtime = 0
        self.last_update = 0
        self.last_finish = [0] * len(weights)
        self._enq_seq = 0

    def advance(self, now) -> None:
        """Bring the virtual clock forward to real time ``now``."""
        t = self.last_update
        if now > t:
            n = len(self.weights)
            while True:
                active = False
                wsum = 0
                fmin = 0
                for q in range(n):
                    f = self.last_finish[q]
                    if f > self.vtime:
                        if not active or f < fmin:
                            fmin = f
                        active = True
                        wsum = wsum + self.weights[q]
                if not active:
                    break
                dt = (fmin - self.vtime) * wsum / self.rate_Bps
                if t + dt <= now:
                    t = t + dt
                    self.vtime = fmin
                else:
                    self.vtime = self.vtime + (now - t) * self.rate_Bps / wsum
                    break
            self.last_update = now

    def gps_idle(self) -> bool:
        return all(f <= self.vtime for f in self.last_finish)

    def enqueue(self, packet, now) -> Admission:
        self.advance(now)
        if not self._buffered and self.gps_idle():
            self.vtime = 0
            self.last_finish = [0] * len(self.weights)
        q = self.classifier[packet.tos]
        if not self._admit(q):
            return Admission.DROPPED
        start = self.vtime if self.vtime > self.last_finish[q] else self.last_finish[q]
        tag = start + packet.size / self.weights[q]
        self.last_finish[q] = tag
        self.queues[q].append((tag, self._enq_seq, packet))
        self._enq_seq += 1
        self._buffered += 1
        self.accepted += 1
        return Admission.ACCEPTED

    def head_tags(self) -> list:
        return [buf[0][0] if buf else None for buf in self.queues]

    def dequeue(self, now):
        if not self._buffered:
            return None
        self.advance(now)
        best = None
        for buf in self.queues:
            if buf:
                head = buf[0]
                if best is None or head[0] < best[0][0] or (head[0] == best[0][0] and head[1] < best[0][1]):
                    best = (head, buf)
        (_, _, packet), buf = best
        buf.popleft()
        self._buffered -= 1
        return packet


def make_qdisc(config: QdiscConfig, rate_bps) -> Qdisc:
    d = config.discipline
    if d is Discipline.FIFO:
        return FifoQdisc(config.capacity)
    if d is Discipline.PQ:
        return PriorityQdisc(len(config.class_capacity), config.class_capacity, config.classifier)
    return WfqQdisc(rate_bps, config.weights, config.class_capacity, config.classifier)


def unbounded_fifo() -> FifoQdisc:
    return FifoQdisc(None)


# --- single-link replay and the fluid reference ------------------------------------


@dataclass
class Job:
    """A packet for single-link replays: arrives at ``time`` carrying ``tos`` and ``size`` bytes."""

    time: Any
    tos: int
    size: int
    idx: int = 0


@dataclass
class ServiceRecord:
    order: list[int] = field(default_factory=list)
    start: dict[int, Any] = field(default_factory=dict)
    finish: dict[int, Any] = field(default_factory=dict)
    dropped: list[int] = field(default_factory=list)


def serve(jobs: Iterable[Job], qdisc: Qdisc, rate_bps) -> ServiceRecord:
    """Replay arrivals through ``qdisc`` feeding one work-conserving link.

    Arrivals sharing an instant are enqueued, in input order, before the
    link picks its next packet at that instant.
    """
    pending = sorted(jobs, key=lambda j: (j.time, j.idx))
    rec = ServiceRecord()
    busy_until = None
    i = 0
    n = len(pending)
    while i < n or busy_until is not None:
        if busy_until is not None and (i >= n or busy_until < pending[i].time):
            now = busy_until
            busy_until = None
        else:
            now = pending[i].time
            while i < n and pending[i].time == now:
                job = pending[i]
                if not qdisc.enqueue(job, now):
                    rec.dropped.append(job.idx)
                i += 1
            if busy_until is not None:
                continue
        job = qdisc.dequeue(now)
        if job is not None:
            rec.order.append(job.idx)
            rec.start[job.idx] = now
            busy_until = now + job.size * 8 / rate_bps
            rec.finish[job.idx] = busy_until
    return rec


def gps_oracle(arrivals: Sequence[tuple[Any, int, int]], weights: Sequence[Any], rate) -> list:
    """Fluid GPS finish time of every packet, in input order.

    ``arrivals`` holds ``(time, queue, size_bytes)``; ``rate`` is in bytes per
    second. Each backlogged queue drains at ``rate * w / sum(backlogged w)``
    and serves its own packets in arrival order. Exact when given Fractions.
    """
    order = sorted(range(len(arrivals)), key=lambda k: (arrivals[k][0], k))
    n = len(order)
    backlog: list[deque] = [deque() for _ in weights]
    finish: list[Any] = [None] * n
    t = None
    i = 0
    while i < n or any(backlog):
        if not any(backlog):
            t = arrivals[order[i]][0] if t is None else max(t, arrivals[order[i]][0])
        while i < n and arrivals[order[i]][0] <= t:
            k = order[i]
            backlog[arrivals[k][1]].append([arrivals[k][2], k])
            i += 1
        active = [q for q, b in enumerate(backlog) if b]
        if not active:
            continue
        wsum = sum(weights[q] for q in active)
        # time for each head to drain at its current share
        drain = {q: backlog[q][0][0] * wsum / (weights[q] * rate) for q in active}
        dt = min(drain.values())
        if i < n and arrivals[order[i]][0] - t < dt:
            dt = arrivals[order[i]][0] - t
            done = []
        else:
            done = [q for q in active if drain[q] == dt]
        for q in active:
            head = backlog[q][0]
            head[0] = 0 if q in done else head[0] - weights[q] * rate * dt / wsum
        t = t + dt
        for q in active:
            if backlog[q] and backlog[q][0][0] <= 0:
                finish[backlog[q].popleft()[1]] = t
    return finish

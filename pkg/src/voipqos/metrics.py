"""VoIP QoS statistics: mean one-way delay, jitter as the sample standard deviation
of delays, loss ratio, ITU limit verdicts and per-second throughput series."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import InvariantViolation
from .netmodel import FATE_DELIVERED, FATE_DROPPED, FATE_IN_FLIGHT, PacketLog, SimInput
from .traffic import CLASS_ORDER, TIME_EPS, TrafficClass


class NoSamples(ValueError):
    """Too few samples for the statistic; reports render it as absent."""


class DelayAccumulator:
    """Running mean / sum of squared deviations of one-way delays (Welford update)."""

    __slots__ = ("n", "mean", "m2", "min_d", "max_d")

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.min_d = math.inf
        self.max_d = -math.inf

    def record(self, d: float) -> None:
        if not d >= 0:
            raise InvariantViolation(f"negative or NaN delay sample {d!r}")
        self.n += 1
        delta = d - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (d - self.mean)
        if d < self.min_d:
            self.min_d = d
        if d > self.max_d:
            self.max_d = d

    def extend(self, samples) -> "DelayAccumulator":
        for d in samples:
            self.record(float(d))
        return self


def average_delay(acc: DelayAccumulator) -> float:
    if acc.n < 1:
        raise NoSamples("average delay needs at least one delivered packet")
    # the running mean can drift an ulp outside [min, max]
    return min(max(acc.mean, acc.min_d), acc.max_d)


def jitter(acc: DelayAccumulator) -> float:
    if acc.n < 2:
        raise NoSamples("jitter needs at least two delivered packets")
    return math.sqrt(max(acc.m2, 0.0) / (acc.n - 1))


@dataclass
class LossAccumulator:
    sent: int = 0
    delivered: int = 0
    lost: int = 0
    in_flight: int = 0

    def check(self) -> None:
        if self.sent != self.delivered + self.lost + self.in_flight:
            raise InvariantViolation(
                f"conservation broken: sent={self.sent} delivered={self.delivered} "
                f"lost={self.lost} in_flight={self.in_flight}"
            )


def loss_ratio(acc: LossAccumulator) -> float:
    """Lost over sent, in percent. In-flight packets are in ``sent`` only."""
    if acc.sent < 1:
        raise NoSamples("loss ratio needs at least one sent packet")
    return acc.lost / acc.sent * 100


@dataclass(frozen=True)
class ItuThresholds:
    delay_max: float = 0.150
    delay_pref: float = 0.100
    jitter_max: float = 0.075
    jitter_pref: float = 0.040
    loss_max: float = 3.0
    loss_pref: float = 1.0

    def __post_init__(self) -> None:
        for name in ("delay", "jitter", "loss"):
            if getattr(self, f"{name}_pref") > getattr(self, f"{name}_max"):
                raise ValueError(f"{name}: preferred limit exceeds the maximum")


class Verdict(str, enum.Enum):
    PASS_PREFERRED = "pass-preferred"
    PASS_MAXIMUM = "pass-maximum"
    FAIL = "fail"
    ABSENT = "absent"

    @property
    def passed(self) -> bool:
        return self in (Verdict.PASS_PREFERRED, Verdict.PASS_MAXIMUM)


def grade(value: float | None, pref: float, maximum: float) -> Verdict:
    if value is None:
        return Verdict.ABSENT
    if value <= pref:
        return Verdict.PASS_PREFERRED
    if value <= maximum:
        return Verdict.PASS_MAXIMUM
    return Verdict.FAIL


def itu_verdict(
    delay: float | None,
    jitter_s: float | None,
    loss_pct: float | None,
    thresholds: ItuThresholds = ItuThresholds(),
) -> tuple[Verdict, Verdict, Verdict]:
    th = thresholds
    return (
        grade(delay, th.delay_pref, th.delay_max),
        grade(jitter_s, th.jitter_pref, th.jitter_max),
        grade(loss_pct, th.loss_pref, th.loss_max),
    )


def n_bins(duration_s: float, width: float = 1.0) -> int:
    return max(0, math.ceil(duration_s / width - TIME_EPS))


def bin_throughput(times, duration_s: float, width: float = 1.0) -> np.ndarray:
    """Packets per bin over ``[0, duration_s)``.

    An instant within ``TIME_EPS`` below a bin edge counts in the later bin, so
    CBR instants computed as ``start + k / rate`` land where exact arithmetic
    would put them.
    """
    nb = n_bins(duration_s, width)
    t = np.asarray(times, dtype=np.float64)
    idx = np.floor((t + TIME_EPS) / width).astype(np.int64)
    idx = idx[(idx >= 0) & (idx < nb)]
    return np.bincount(idx, minlength=nb)[:nb]


def _opt(fn, acc):
    try:
        return fn(acc)
    except NoSamples:
        return None


@dataclass
class ClassReport:
    traffic_class: TrafficClass
    loss: LossAccumulator
    delays: DelayAccumulator
    sent_series: np.ndarray
    received_series: np.ndarray
    warmup_bins: int
    thresholds: ItuThresholds = field(default_factory=ItuThresholds)

    @property
    def delay(self) -> float | None:
        return _opt(average_delay, self.delays)

    @property
    def jitter(self) -> float | None:
        return _opt(jitter, self.delays)

    @property
    def loss_pct(self) -> float | None:
        return _opt(loss_ratio, self.loss)

    @property
    def verdicts(self) -> tuple[Verdict, Verdict, Verdict]:
        return itu_verdict(self.delay, self.jitter, self.loss_pct, self.thresholds)

    def _steady(self, series: np.ndarray) -> float | None:
        window = series[self.warmup_bins:]
        if len(window) == 0:
            return None
        return float(np.median(window))

    @property
    def sent_pps(self) -> float | None:
        """Median packets/s over the post-warm-up bins."""
        return self._steady(self.sent_series)

    @property
    def received_pps(self) -> float | None:
        return self._steady(self.received_series)


@dataclass
class QosReport:
    discipline: str
    duration_s: float
    warmup_s: float
    classes: dict[TrafficClass, ClassReport]
    n_events: int = 0
    backend: str = ""

    def __getitem__(self, cls) -> ClassReport:
        return self.classes[TrafficClass(cls)]


def build_report(
    inp: SimInput,
    log: PacketLog,
    discipline: str,
    warmup_s: float = 10.0,
    thresholds: ItuThresholds = ItuThresholds(),
    bin_width: float = 1.0,
) -> QosReport:
    """Aggregate a packet log per traffic class.

    Delay, jitter and loss use packets created at or after ``warmup_s``; the
    throughput series cover the whole run.
    """
    if not np.isin(log.fate, (FATE_IN_FLIGHT, FATE_DELIVERED, FATE_DROPPED)).all():
        raise InvariantViolation("unknown packet fate code")
    if np.isnan(log.fate_time[log.fate != FATE_IN_FLIGHT]).any():
        raise InvariantViolation("packet with a fate but no fate time")
    pkt_class = inp.src_class[log.source]
    duration = inp.end_s
    warm_bins = min(n_bins(warmup_s, bin_width), n_bins(duration, bin_width))
    classes = {}
    for ci in sorted(set(int(c) for c in inp.src_class)):
        mine = pkt_class == ci
        # whole run must conserve too
        LossAccumulator(
            sent=int(mine.sum()),
            delivered=int((mine & (log.fate == FATE_DELIVERED)).sum()),
            lost=int((mine & (log.fate == FATE_DROPPED)).sum()),
            in_flight=int((mine & (log.fate == FATE_IN_FLIGHT)).sum()),
        ).check()
        measured = mine & (log.created >= warmup_s - TIME_EPS)
        fate = log.fate[measured]
        loss = LossAccumulator(
            sent=int(measured.sum()),
            delivered=int((fate == FATE_DELIVERED).sum()),
            lost=int((fate == FATE_DROPPED).sum()),
            in_flight=int((fate == FATE_IN_FLIGHT).sum()),
        )
        loss.check()
        delivered = measured & (log.fate == FATE_DELIVERED)
        acc = DelayAccumulator().extend((log.fate_time[delivered] - log.created[delivered]).tolist())
        got = mine & (log.fate == FATE_DELIVERED)
        cls = CLASS_ORDER[ci]
        classes[cls] = ClassReport(
            traffic_class=cls,
            loss=loss,
            delays=acc,
            sent_series=bin_throughput(log.created[mine], duration, bin_width),
            received_series=bin_throughput(log.fate_time[got], duration, bin_width),
            warmup_bins=warm_bins,
            thresholds=thresholds,
        )
    return QosReport(discipline, duration, warmup_s, classes, n_events=log.n_events, backend=log.backend)

"""Open-loop traffic sources: constant bit rate and on/off CBR."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Generation instants within this distance of a boundary count as on it.
TIME_EPS = 1e-9


class TrafficClass(str, enum.Enum):
    VOICE = "voice"
    VIDEO = "video"
    FTP = "ftp"
    BACKGROUND = "background"


CLASS_ORDER = (TrafficClass.VOICE, TrafficClass.VIDEO, TrafficClass.FTP, TrafficClass.BACKGROUND)
CLASS_INDEX = {c: i for i, c in enumerate(CLASS_ORDER)}
DEFAULT_TOS = {
    TrafficClass.VOICE: 6,
    TrafficClass.VIDEO: 4,
    TrafficClass.FTP: 2,
    TrafficClass.BACKGROUND: 0,
}
VOICE_PACKET_BYTES = 200


class Pattern(str, enum.Enum):
    CBR = "cbr"
    ONOFF = "onoff"


@dataclass(frozen=True)
class TrafficSpec:
    traffic_class: TrafficClass
    src: str
    dst: str
    rate_pps: float
    packet_size_bytes: int
    start_s: float = 0.0
    stop_s: float = 480.0
    tos: int | None = None
    pattern: Pattern = Pattern.CBR
    on_s: float = 0.0
    off_s: float = 0.0
    # seeds a uniform phase offset in [0, 1/rate); None keeps the phase fixed
    jitter_seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "traffic_class", TrafficClass(self.traffic_class))
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        if self.tos is None:
            object.__setattr__(self, "tos", DEFAULT_TOS[self.traffic_class])

    def problems(self) -> list[tuple[str, str]]:
        """``(field, message)`` pairs, empty when the spec is usable."""
        out = []
        if not self.rate_pps > 0:
            out.append(("rate_pps", "must be positive"))
        if not (isinstance(self.packet_size_bytes, int) and self.packet_size_bytes > 0):
            out.append(("packet_size_bytes", "must be a positive integer"))
        if not 0 <= self.tos <= 7:
            out.append(("tos", "must be in 0..7"))
        if not self.start_s >= 0:
            out.append(("start_s", "must be non-negative"))
        if not self.stop_s > self.start_s:
            out.append(("stop_s", "must exceed start_s"))
        if self.pattern is Pattern.ONOFF:
            for name in ("on_s", "off_s"):
                if not getattr(self, name) > 0:
                    out.append((name, "must be positive for an onoff source"))
        return out

    @property
    def offered_bps(self) -> float:
        return self.rate_pps * self.packet_size_bytes * 8

    @property
    def burst_len(self) -> int:
        """Packets per on-period; generation instants j/rate with j/rate < on_s."""
        return max(1, math.ceil(self.on_s * self.rate_pps - TIME_EPS))


def phase_offset(spec: TrafficSpec, scenario_seed: int) -> float:
    if spec.jitter_seed is None:
        return 0.0
    rng = np.random.default_rng([scenario_seed, spec.jitter_seed])
    return float(rng.uniform(0.0, 1.0 / spec.rate_pps))


def next_generation_time(spec: TrafficSpec, k: int, phase: float = 0.0) -> float:
    """Instant of the ``k``-th packet (k from 0)."""
    if k < 0:
        raise ValueError("packet ordinal must be non-negative")
    start = spec.start_s + phase
    if spec.pattern is Pattern.CBR:
        return start + k / spec.rate_pps
    cycle, j = divmod(k, spec.burst_len)
    return start + cycle * (spec.on_s + spec.off_s) + j / spec.rate_pps


def generation_times(spec: TrafficSpec, end_s: float, phase: float = 0.0) -> np.ndarray:
    """All generation instants before ``min(stop_s, end_s)``, strictly increasing."""
    stop = min(spec.stop_s, end_s) - TIME_EPS
    start = spec.start_s + phase
    if spec.pattern is Pattern.CBR:
        n = max(0, math.ceil((stop - start) * spec.rate_pps) + 1)
        ks = np.arange(n, dtype=np.int64)
        times = start + ks / spec.rate_pps
    else:
        period = spec.on_s + spec.off_s
        cycles = max(0, math.ceil((stop - start) / period) + 1)
        ks = np.arange(cycles * spec.burst_len, dtype=np.int64)
        cyc, j = np.divmod(ks, spec.burst_len)
        times = start + cyc * period + j / spec.rate_pps
    return times[times < stop]


@dataclass
class Packet:
    """A simulated datagram. ``flow`` indexes the originating source."""

    id: int
    flow: int
    traffic_class: TrafficClass
    tos: int
    size: int
    src: int
    dst: int
    created_at: float
    delivered_at: float | None = None
    dropped_at: float | None = None

    @property
    def delay(self) -> float | None:
        if self.delivered_at is None:
            return None
        return self.delivered_at - self.created_at


class Source:
    """Stateful wrapper emitting packets for one spec."""

    def __init__(self, spec: TrafficSpec, flow: int, src: int, dst: int, phase: float = 0.0):
        self.spec = spec
        self.flow = flow
        self.src = src
        self.dst = dst
        self.phase = phase
        self.k = 0
        self.sent = 0

    def next_time(self) -> float:
        return next_generation_time(self.spec, self.k, self.phase)

    def make_packet(self, packet_id: int, now: float) -> Packet:
        if now >= self.spec.stop_s:
            raise ValueError("source already stopped")
        spec = self.spec
        pkt = Packet(packet_id, self.flow, spec.traffic_class, spec.tos, spec.packet_size_bytes, self.src, self.dst, now)
        self.k += 1
        self.sent += 1
        return pkt

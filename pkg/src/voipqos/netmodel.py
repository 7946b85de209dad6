"""Simulated network: nodes, simplex channels, static routes and store-and-forward movement.

A topology is declared with :class:`NodeSpec` / :class:`LinkSpec` and compiled by
:func:`build_network` into flat arrays. :class:`SimInput` bundles those arrays
with the traffic schedule. Both simulation backends (this module's reference
event loop and the compiled kernel) consume the same :class:`SimInput` and
return a :class:`PacketLog`.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .engine import Engine, EventKind, InvariantViolation
from .qdisc import N_TOS, Discipline, FifoQdisc, PriorityQdisc, QdiscConfig, WfqQdisc
from .traffic import CLASS_INDEX, CLASS_ORDER, Packet, TrafficSpec, generation_times, phase_offset

DS1_BPS = 1_544_000
TENBASET_BPS = 10_000_000
DEFAULT_CLOUD_DELAY_S = 0.020

# port qdisc codes shared with the compiled kernel
PORT_UNBOUNDED = 0
PORT_FIFO = 1
PORT_PQ = 2
PORT_WFQ = 3

FATE_IN_FLIGHT = 0
FATE_DELIVERED = 1
FATE_DROPPED = 2


class NodeKind(str, enum.Enum):
    HOST = "host"
    SWITCH = "switch"
    ROUTER = "router"
    CLOUD = "cloud"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: NodeKind
    # fixed transit latency added to every arrival at this node (clouds)
    delay_s: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NodeKind(self.kind))


@dataclass(frozen=True)
class LinkSpec:
    """A bidirectional link; each direction is an independent simplex channel."""

    a: str
    b: str
    rate_bps: float
    prop_delay_s: float = 0.0


def serialization_delay(size_bytes: int, rate_bps: float) -> float:
    if not rate_bps > 0:
        raise ValueError("link rate must be positive")
    return size_bytes * 8 / rate_bps


@dataclass
class Network:
    node_ids: list[str]
    node_kind: list[NodeKind]
    node_delay: np.ndarray
    port_node: np.ndarray
    port_peer: np.ndarray
    port_rate: np.ndarray
    port_prop: np.ndarray
    port_wan: np.ndarray
    route: np.ndarray  # [node, dst] -> output port, -1 when none

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_ports(self) -> int:
        return len(self.port_node)

    def index(self, node_id: str) -> int:
        return self.node_ids.index(node_id)

    def path(self, src: int, dst: int) -> list[int]:
        """Node sequence from ``src`` to ``dst`` following the route table."""
        out = [src]
        node = src
        while node != dst:
            p = self.route[node, dst]
            if p < 0:
                raise TopologyError(f"{self.node_ids[dst]} unreachable from {self.node_ids[node]}")
            node = int(self.port_peer[p])
            out.append(node)
            if len(out) > self.n_nodes:
                raise TopologyError("routing loop")
        return out

    def hop_count(self, src: int, dst: int) -> int:
        return len(self.path(src, dst)) - 1


def build_network(nodes: list[NodeSpec], links: list[LinkSpec]) -> Network:
    ids = [n.id for n in nodes]
    index = {nid: i for i, nid in enumerate(ids)}
    if len(index) != len(ids):
        raise TopologyError("duplicate node id")
    port_node, port_peer, port_rate, port_prop, port_wan = [], [], [], [], []
    adjacency: list[list[int]] = [[] for _ in nodes]
    for link in links:
        for u, v in ((link.a, link.b), (link.b, link.a)):
            if u not in index or v not in index:
                raise TopologyError(f"link {link.a}-{link.b} references an unknown node")
            p = len(port_node)
            iu, iv = index[u], index[v]
            port_node.append(iu)
            port_peer.append(iv)
            port_rate.append(float(link.rate_bps))
            port_prop.append(float(link.prop_delay_s))
            port_wan.append(nodes[iu].kind is NodeKind.ROUTER and nodes[iv].kind is NodeKind.CLOUD)
            adjacency[iu].append(p)
    n = len(nodes)
    route = np.full((n, n), -1, dtype=np.int32)
    # BFS toward every destination over reversed edges; first-found port wins
    for dst in range(n):
        seen = {dst}
        frontier = deque([dst])
        while frontier:
            v = frontier.popleft()
            for u in range(n):
                if u in seen:
                    continue
                for p in adjacency[u]:
                    if port_peer[p] == v:
                        route[u, dst] = p
                        seen.add(u)
                        frontier.append(u)
                        break
    return Network(
        node_ids=ids,
        node_kind=[nd.kind for nd in nodes],
        node_delay=np.array([nd.delay_s for nd in nodes], dtype=np.float64),
        port_node=np.array(port_node, dtype=np.int32),
        port_peer=np.array(port_peer, dtype=np.int32),
        port_rate=np.array(port_rate, dtype=np.float64),
        port_prop=np.array(port_prop, dtype=np.float64),
        port_wan=np.array(port_wan, dtype=bool),
        route=route,
    )


@dataclass
class SimInput:
    """Everything a backend needs, as plain arrays."""

    network: Network
    end_s: float
    port_kind: np.ndarray  # PORT_* code
    port_nq: np.ndarray
    port_cap: np.ndarray  # [port, 8], -1 unbounded
    port_cls: np.ndarray  # [port, 8] tos -> queue
    port_weight: np.ndarray  # [port, 8]
    src_node: np.ndarray
    src_dst: np.ndarray
    src_class: np.ndarray
    src_tos: np.ndarray
    src_size: np.ndarray
    sched_offset: np.ndarray  # [n_sources + 1] slices into sched_time
    sched_time: np.ndarray

    @property
    def n_sources(self) -> int:
        return len(self.src_node)

    @property
    def n_packets(self) -> int:
        return int(self.sched_offset[-1])


def compile_input(
    network: Network,
    qdisc: QdiscConfig,
    traffic: list[TrafficSpec],
    end_s: float,
    seed: int = 0,
) -> SimInput:
    """Attach ``qdisc`` to every router WAN port, unbounded FIFO elsewhere, and lay out the schedule."""
    n_ports = network.n_ports
    kind = np.full(n_ports, PORT_UNBOUNDED, dtype=np.int32)
    nq = np.ones(n_ports, dtype=np.int32)
    cap = np.full((n_ports, N_TOS), -1, dtype=np.int64)
    cls = np.zeros((n_ports, N_TOS), dtype=np.int32)
    weight = np.ones((n_ports, N_TOS), dtype=np.float64)
    code = {Discipline.FIFO: PORT_FIFO, Discipline.PQ: PORT_PQ, Discipline.WFQ: PORT_WFQ}[qdisc.discipline]
    for p in np.flatnonzero(network.port_wan):
        kind[p] = code
        if qdisc.discipline is Discipline.FIFO:
            cap[p, 0] = -1 if qdisc.capacity is None else qdisc.capacity
        else:
            nq[p] = qdisc.n_queues
            cls[p] = qdisc.classifier
            for q, c in enumerate(qdisc.class_capacity):
                cap[p, q] = -1 if c is None else c
            if qdisc.discipline is Discipline.WFQ:
                weight[p, : nq[p]] = [float(w) for w in qdisc.weights]
    index = {nid: i for i, nid in enumerate(network.node_ids)}
    times = []
    for spec in traffic:
        times.append(generation_times(spec, end_s, phase_offset(spec, seed)))
    offsets = np.zeros(len(traffic) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(t) for t in times])
    return SimInput(
        network=network,
        end_s=float(end_s),
        port_kind=kind,
        port_nq=nq,
        port_cap=cap,
        port_cls=cls,
        port_weight=weight,
        src_node=np.array([index[s.src] for s in traffic], dtype=np.int32),
        src_dst=np.array([index[s.dst] for s in traffic], dtype=np.int32),
        src_class=np.array([CLASS_INDEX[s.traffic_class] for s in traffic], dtype=np.int32),
        src_tos=np.array([s.tos for s in traffic], dtype=np.int32),
        src_size=np.array([s.packet_size_bytes for s in traffic], dtype=np.int64),
        sched_offset=offsets,
        sched_time=np.concatenate(times) if times else np.zeros(0),
    )


@dataclass
class PacketLog:
    """Per-packet outcome, indexed by packet id (creation order)."""

    source: np.ndarray
    created: np.ndarray
    fate: np.ndarray
    fate_time: np.ndarray
    n_events: int
    backend: str = "python"

    def __len__(self) -> int:
        return len(self.source)

    def same_as(self, other: "PacketLog") -> bool:
        return (
            self.n_events == other.n_events
            and np.array_equal(self.source, other.source)
            and np.array_equal(self.created, other.created)
            and np.array_equal(self.fate, other.fate)
            and np.array_equal(self.fate_time, other.fate_time, equal_nan=True)
        )


# --- reference (pure Python) simulator -------------------------------------------


@dataclass(eq=False)
class Port:
    index: int
    node: int
    peer: int
    rate_bps: float
    prop_s: float
    qdisc: object
    busy: bool = False
    current: Packet | None = None
    sent: int = 0


def _port_qdisc(inp: SimInput, p: int):
    kind = int(inp.port_kind[p])
    caps = [None if c < 0 else int(c) for c in inp.port_cap[p]]
    nq = int(inp.port_nq[p])
    if kind == PORT_UNBOUNDED:
        return FifoQdisc(None)
    if kind == PORT_FIFO:
        return FifoQdisc(caps[0])
    cls = [int(c) for c in inp.port_cls[p]]
    if kind == PORT_PQ:
        return PriorityQdisc(nq, caps[:nq], cls)
    weights = [float(w) for w in inp.port_weight[p, :nq]]
    return WfqQdisc(float(inp.network.port_rate[p]), weights, caps[:nq], cls)


@dataclass
class ReferenceSim:
    """Object-level simulation of one scenario on the :class:`Engine`."""

    inp: SimInput
    record_trace: bool = False
    packets: list[Packet] = field(default_factory=list)

    def __post_init__(self) -> None:
        net = self.inp.network
        self.ports = [
            Port(p, int(net.port_node[p]), int(net.port_peer[p]), float(net.port_rate[p]),
                 float(net.port_prop[p]), _port_qdisc(self.inp, p))
            for p in range(net.n_ports)
        ]
        self.route = net.route.tolist()
        self.node_delay = net.node_delay.tolist()
        self.sched = self.inp.sched_time.tolist()
        self.offsets = self.inp.sched_offset.tolist()
        self.engine = Engine(record_trace=self.record_trace)
        self.engine.on(EventKind.GENERATE_PACKET, self._on_generate)
        self.engine.on(EventKind.LINK_ARRIVAL, self._on_arrival)
        self.engine.on(EventKind.TRANSMISSION_COMPLETE, self._on_tx_complete)

    def run(self) -> PacketLog:
        inp = self.inp
        for s in range(inp.n_sources):
            if self.offsets[s + 1] > self.offsets[s]:
                self.engine.schedule(self.sched[self.offsets[s]], EventKind.GENERATE_PACKET, (s, 0))
        self.engine.run_until(inp.end_s)
        return self._log()

    def _on_generate(self, engine: Engine, ev) -> None:
        s, k = ev.payload
        inp = self.inp
        now = engine.clock
        pkt = Packet(
            len(self.packets), s, CLASS_ORDER[inp.src_class[s]], int(inp.src_tos[s]), int(inp.src_size[s]),
            int(inp.src_node[s]), int(inp.src_dst[s]), now,
        )
        self.packets.append(pkt)
        nxt = self.offsets[s] + k + 1
        if nxt < self.offsets[s + 1]:
            engine.schedule(self.sched[nxt], EventKind.GENERATE_PACKET, (s, k + 1))
        self.forward(pkt.src, pkt, now)

    def _on_arrival(self, engine: Engine, ev) -> None:
        node, pid = ev.payload
        self.forward(node, self.packets[pid], engine.clock)

    def _on_tx_complete(self, engine: Engine, ev) -> None:
        port = self.ports[ev.payload[0]]
        pkt = port.current
        now = engine.clock
        engine.schedule(now + port.prop_s + self.node_delay[port.peer], EventKind.LINK_ARRIVAL, (port.peer, pkt.id))
        self._start(port, now)

    def forward(self, node: int, pkt: Packet, now: float) -> None:
        if node == pkt.dst:
            self.deliver(pkt, now)
            return
        p = self.route[node][pkt.dst]
        if p < 0:
            raise InvariantViolation(f"no route from node {node} to {pkt.dst}")
        port = self.ports[p]
        if not port.qdisc.enqueue(pkt, now):
            if pkt.delivered_at is not None or pkt.dropped_at is not None:
                raise InvariantViolation(f"packet {pkt.id} dropped after its fate was set")
            pkt.dropped_at = now
            return
        if not port.busy:
            self._start(port, now)

    def _start(self, port: Port, now: float) -> None:
        pkt = port.qdisc.dequeue(now)
        if pkt is None:
            port.busy = False
            port.current = None
            return
        port.busy = True
        port.current = pkt
        port.sent += 1
        self.engine.schedule(now + pkt.size * 8 / port.rate_bps, EventKind.TRANSMISSION_COMPLETE, (port.index,))

    def deliver(self, pkt: Packet, now: float) -> None:
        if pkt.delivered_at is not None or pkt.dropped_at is not None:
            raise InvariantViolation(f"packet {pkt.id} delivered twice or after a drop")
        if now < pkt.created_at:
            raise InvariantViolation(f"packet {pkt.id} delivered before it was created")
        pkt.delivered_at = now

    def _log(self) -> PacketLog:
        n = len(self.packets)
        fate = np.zeros(n, dtype=np.int8)
        fate_time = np.full(n, np.nan)
        for i, pkt in enumerate(self.packets):
            if pkt.delivered_at is not None:
                fate[i] = FATE_DELIVERED
                fate_time[i] = pkt.delivered_at
            elif pkt.dropped_at is not None:
                fate[i] = FATE_DROPPED
                fate_time[i] = pkt.dropped_at
        return PacketLog(
            source=np.array([p.flow for p in self.packets], dtype=np.int32),
            created=np.array([p.created_at for p in self.packets], dtype=np.float64),
            fate=fate,
            fate_time=fate_time,
            n_events=self.engine.dispatched,
            backend="python",
        )


def simulate_reference(inp: SimInput, record_trace: bool = False) -> PacketLog:
    return ReferenceSim(inp, record_trace=record_trace).run()

"""Scenario files: TOML schema, validation with positioned diagnostics, serialization
and the built-in two-site topology.

A scenario looks like::

    schema_version = 1
    name = "paper-topology"
    duration_s = 480.0
    seed = 1
    warmup_s = 10.0

    [qdisc]                      # applied to every router port facing a cloud
    discipline = "fifo"          # fifo | pq | wfq
    capacity = 100               # fifo buffer, packets ("unbounded" allowed)
    class_capacity = [100, 100, 100, 100]
    classifier = [3, 3, 2, 2, 1, 1, 0, 0]   # tos -> queue, queue 0 highest
    weights = [4, 3, 2, 1]

    [[nodes]]
    id = "A-router"
    kind = "router"              # host | switch | router | cloud
    delay_s = 0.0                # transit latency added on arrival (clouds)

    [[links]]
    a = "A-router"
    b = "cloud"
    rate_bps = 1544000
    prop_delay_s = 0.0

    [[traffic]]
    class = "voice"              # voice | video | ftp | background
    src = "A-floor0"
    dst = "B-floor0"
    rate_pps = 66.66666666666667
    packet_size_bytes = 200
    start_s = 0.0
    stop_s = 480.0
    tos = 6
    pattern = "cbr"              # cbr | onoff (then on_s, off_s)

An optional ``[itu]`` table overrides the delay/jitter/loss limits.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .metrics import ItuThresholds
from .netmodel import (
    DEFAULT_CLOUD_DELAY_S,
    DS1_BPS,
    TENBASET_BPS,
    LinkSpec,
    Network,
    NodeKind,
    NodeSpec,
    SimInput,
    build_network,
    compile_input,
)
from .qdisc import QdiscConfig, QdiscConfigError
from .traffic import VOICE_PACKET_BYTES, Pattern, TrafficClass, TrafficSpec

SCHEMA_VERSION = 1
BUNDLED = ("paper-topology", "paper-topology-expanded")

VOICE_TOTAL_PPS = 400
FTP_PPS, FTP_BYTES = 100, 1500
VIDEO_PPS, VIDEO_BYTES = 37.5, 1000
FLOORS = 3
HOSTS_PER_FLOOR = 15


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.field}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    traffic: tuple[TrafficSpec, ...]
    qdisc: QdiscConfig = field(default_factory=QdiscConfig)
    duration_s: float = 480.0
    seed: int = 1
    warmup_s: float = 10.0
    itu: ItuThresholds = field(default_factory=ItuThresholds)
    output_dir: str | None = None

    def with_qdisc(self, discipline: str) -> "ScenarioConfig":
        return replace(self, qdisc=replace(self.qdisc, discipline=discipline))

    def network(self) -> Network:
        return build_network(list(self.nodes), list(self.links))

    def sim_input(self) -> SimInput:
        return compile_input(self.network(), self.qdisc, list(self.traffic), self.duration_s, self.seed)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "duration_s": float(self.duration_s),
            "seed": self.seed,
            "warmup_s": float(self.warmup_s),
        }
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        q = self.qdisc
        d["qdisc"] = {
            "discipline": q.discipline.value,
            "capacity": _cap_out(q.capacity),
            "class_capacity": [_cap_out(c) for c in q.class_capacity],
            "classifier": list(q.classifier),
            "weights": list(q.weights),
        }
        if self.itu != ItuThresholds():
            d["itu"] = dataclasses.asdict(self.itu)
        d["nodes"] = [{"id": n.id, "kind": n.kind.value, "delay_s": float(n.delay_s)} for n in self.nodes]
        d["links"] = [
            {"a": ln.a, "b": ln.b, "rate_bps": ln.rate_bps, "prop_delay_s": float(ln.prop_delay_s)}
            for ln in self.links
        ]
        d["traffic"] = [_traffic_out(t) for t in self.traffic]
        return d

    def dumps(self) -> str:
        return dump_toml(self.to_dict())

    def digest(self, ignore_discipline: bool = False) -> str:
        d = self.to_dict()
        if ignore_discipline:
            del d["qdisc"]["discipline"]
        return hashlib.sha256(dump_toml(d).encode()).hexdigest()


# nodes and links stay one per line; traffic gets a [[traffic]] block per source
_INLINE_ARRAYS = ("nodes", "links")


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"cannot serialize {v!r}")
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dump_toml(d: dict[str, Any]) -> str:
    """Deterministic TOML for the scenario schema (scalars, tables, arrays of tables)."""
    head, tables, arrays = [], [], []
    for k, v in d.items():
        if isinstance(v, dict):
            tables.append((k, v))
        elif isinstance(v, list) and v and all(isinstance(x, dict) for x in v):
            arrays.append((k, v))
        else:
            head.append(f"{k} = {_toml_value(v)}")
    out = head[:]
    # inline arrays must precede the first table header or they would land inside it
    for k, v in arrays:
        if k in _INLINE_ARRAYS:
            out += ["", f"{k} = ["] + [f"    {_toml_value(x)}," for x in v] + ["]"]
    for k, v in tables:
        out += ["", f"[{k}]"] + [f"{kk} = {_toml_value(vv)}" for kk, vv in v.items()]
    for k, v in arrays:
        if k not in _INLINE_ARRAYS:
            for x in v:
                out += ["", f"[[{k}]]"] + [f"{kk} = {_toml_value(vv)}" for kk, vv in x.items()]
    return "\n".join(out) + "\n"


def _cap_out(c):
    return "unbounded" if c is None else c


def _traffic_out(t: TrafficSpec) -> dict[str, Any]:
    d = {
        "class": t.traffic_class.value,
        "src": t.src,
        "dst": t.dst,
        "rate_pps": t.rate_pps,
        "packet_size_bytes": t.packet_size_bytes,
        "start_s": float(t.start_s),
        "stop_s": float(t.stop_s),
        "tos": t.tos,
        "pattern": t.pattern.value,
    }
    if t.pattern is Pattern.ONOFF:
        d["on_s"] = float(t.on_s)
        d["off_s"] = float(t.off_s)
    if t.jitter_seed is not None:
        d["jitter_seed"] = t.jitter_seed
    return d


# --- parsing ------------------------------------------------------------------------

_TOP_KEYS = {"schema_version", "name", "duration_s", "seed", "warmup_s", "output_dir", "qdisc", "itu", "nodes", "links", "traffic"}
_QDISC_KEYS = {"discipline", "capacity", "class_capacity", "classifier", "weights"}
_NODE_KEYS = {"id", "kind", "delay_s"}
_LINK_KEYS = {"a", "b", "rate_bps", "prop_delay_s"}
_TRAFFIC_KEYS = {"class", "src", "dst", "rate_pps", "packet_size_bytes", "start_s", "stop_s", "tos", "pattern", "on_s", "off_s", "jitter_seed"}
_ITU_KEYS = {f.name for f in dataclasses.fields(ItuThresholds)}


class _Locator:
    """Maps a field path such as ``links[2].rate_bps`` to a 1-based source line."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, path: str) -> int | None:
        m = re.match(r"^(\w+)(?:\[(\d+)\])?(?:\.(\w+))?", path)
        if not m:
            return None
        section, idx, key = m.group(1), m.group(2), m.group(3)
        if section in _TOP_KEYS - {"qdisc", "itu", "nodes", "links", "traffic"}:
            return self._key_line(0, len(self.lines), section)
        if idx is None:
            start = self._header(rf"^\s*\[{section}\]\s*(#.*)?$", 0)
        else:
            start = self._header(rf"^\s*\[\[{section}\]\]\s*(#.*)?$", int(idx))
            if start is None:
                return self._inline_entry(section, int(idx))
        if start is None:
            return None
        end = next((i for i in range(start + 1, len(self.lines)) if self.lines[i].lstrip().startswith("[")), len(self.lines))
        if key is None:
            return start + 1
        return self._key_line(start + 1, end, key) or start + 1

    def _inline_entry(self, section: str, nth: int) -> int | None:
        """Line of the ``nth`` one-line inline table in ``section = [ ... ]``."""
        start = self._header(rf"^\s*{section}\s*=\s*\[", 0)
        if start is None:
            return None
        seen = 0
        for i in range(start, len(self.lines)):
            line = self.lines[i]
            if i > start and line.strip().startswith("]"):
                break
            seen_here = line.count("{")
            if seen <= nth < seen + seen_here:
                return i + 1
            seen += seen_here
        return None

    def _header(self, pattern: str, nth: int) -> int | None:
        seen = 0
        for i, line in enumerate(self.lines):
            if re.match(pattern, line):
                if seen == nth:
                    return i
                seen += 1
        return None

    def _key_line(self, lo: int, hi: int, key: str) -> int | None:
        for i in range(lo, hi):
            line = self.lines[i]
            if lo == 0 and line.lstrip().startswith("["):
                break
            if re.match(rf"^\s*{re.escape(key)}\s*=", line):
                return i + 1
        return None


class _Reader:
    def __init__(self, text: str):
        self.diags: list[Diagnostic] = []
        self.loc = _Locator(text)

    def err(self, path: str, msg: str) -> None:
        self.diags.append(Diagnostic(path, msg, self.loc.find(path)))

    def table(self, data: Any, path: str, allowed: set[str]) -> dict:
        if not isinstance(data, dict):
            self.err(path, "expected a table")
            return {}
        for k in data:
            if k not in allowed:
                self.err(f"{path}.{k}" if path else k, "unknown key")
        return data

    def get(self, tbl: dict, path: str, key: str, kinds: tuple, default: Any = ..., check=None, msg: str = ""):
        full = f"{path}.{key}" if path else key
        if key not in tbl:
            if default is ...:
                self.err(full, "missing required key")
                return None
            return default
        v = tbl[key]
        if isinstance(v, bool) or not isinstance(v, kinds):
            self.err(full, f"expected {' or '.join(k.__name__ for k in kinds)}, got {type(v).__name__}")
            return None
        if check is not None and not check(v):
            self.err(full, msg)
            return None
        return v

    def capacity(self, v: Any, path: str):
        if v == "unbounded":
            return None
        if isinstance(v, int) and not isinstance(v, bool) and v > 0:
            return v
        self.err(path, 'capacity must be a positive integer or "unbounded"')
        return None


_NUM = (int, float)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and fully validate scenario text; raises :class:`ScenarioError`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError([Diagnostic("<syntax>", str(exc), int(m.group(1)) if m else None)]) from None
    r = _Reader(text)
    raw = r.table(raw, "", _TOP_KEYS)
    version = r.get(raw, "", "schema_version", (int,))
    if version is not None and version != SCHEMA_VERSION:
        r.err("schema_version", f"unsupported schema version {version} (expected {SCHEMA_VERSION})")
    name = r.get(raw, "", "name", (str,), check=bool, msg="must be non-empty")
    duration = r.get(raw, "", "duration_s", _NUM, 480.0, lambda v: v > 0, "must be positive")
    seed = r.get(raw, "", "seed", (int,), 1)
    warmup = r.get(raw, "", "warmup_s", _NUM, 10.0, lambda v: v >= 0, "must be non-negative")
    if duration is not None and warmup is not None and warmup >= duration:
        r.err("warmup_s", "warm-up must end before the run does")
    output_dir = r.get(raw, "", "output_dir", (str,), None)

    qraw = r.table(raw.get("qdisc", {}), "qdisc", _QDISC_KEYS)
    qkw: dict[str, Any] = {}
    disc = r.get(qraw, "qdisc", "discipline", (str,), "fifo", lambda v: v in ("fifo", "pq", "wfq"), "must be fifo, pq or wfq")
    qkw["discipline"] = disc or "fifo"
    if "capacity" in qraw:
        qkw["capacity"] = r.capacity(qraw["capacity"], "qdisc.capacity")
    if "class_capacity" in qraw:
        cc = r.get(qraw, "qdisc", "class_capacity", (list,))
        if cc is not None:
            qkw["class_capacity"] = tuple(r.capacity(c, f"qdisc.class_capacity[{i}]") for i, c in enumerate(cc))
    if "classifier" in qraw:
        cl = r.get(qraw, "qdisc", "classifier", (list,))
        if cl is not None:
            if all(isinstance(c, int) and not isinstance(c, bool) for c in cl):
                qkw["classifier"] = tuple(cl)
            else:
                r.err("qdisc.classifier", "entries must be integer queue indices")
    if "weights" in qraw:
        w = r.get(qraw, "qdisc", "weights", (list,))
        if w is not None:
            if all(isinstance(x, _NUM) and not isinstance(x, bool) for x in w):
                qkw["weights"] = tuple(w)
            else:
                r.err("qdisc.weights", "entries must be numbers")
    qdisc = None
    try:
        qdisc = QdiscConfig(**qkw)
    except QdiscConfigError as exc:
        for fld, problem in exc.problems:
            r.err(f"qdisc.{fld}", problem)

    itu = ItuThresholds()
    if "itu" in raw:
        iraw = r.table(raw["itu"], "itu", _ITU_KEYS)
        vals = {k: r.get(iraw, "itu", k, _NUM, getattr(itu, k), lambda v: v >= 0, "must be non-negative") for k in _ITU_KEYS}
        try:
            itu = ItuThresholds(**{k: v for k, v in vals.items() if v is not None})
        except ValueError as exc:
            r.err("itu", str(exc))

    nodes: list[NodeSpec] = []
    kinds = {k.value for k in NodeKind}
    node_list = r.get(raw, "", "nodes", (list,))
    for i, nraw in enumerate(node_list or []):
        p = f"nodes[{i}]"
        nraw = r.table(nraw, p, _NODE_KEYS)
        nid = r.get(nraw, p, "id", (str,), check=bool, msg="must be non-empty")
        kind = r.get(nraw, p, "kind", (str,), check=lambda v: v in kinds, msg=f"must be one of {sorted(kinds)}")
        delay = r.get(nraw, p, "delay_s", _NUM, None, lambda v: v >= 0, "must be non-negative")
        if nid is None or kind is None:
            continue
        if any(n.id == nid for n in nodes):
            r.err(f"{p}.id", f"duplicate node id {nid!r}")
            continue
        if delay is None:
            delay = DEFAULT_CLOUD_DELAY_S if kind == "cloud" else 0.0
        nodes.append(NodeSpec(nid, NodeKind(kind), float(delay)))
    ids = {n.id for n in nodes}

    links: list[LinkSpec] = []
    for i, lraw in enumerate(r.get(raw, "", "links", (list,)) or []):
        p = f"links[{i}]"
        lraw = r.table(lraw, p, _LINK_KEYS)
        ends = []
        for key in ("a", "b"):
            v = r.get(lraw, p, key, (str,))
            if v is not None and v not in ids:
                r.err(f"{p}.{key}", f"unknown node {v!r}")
                v = None
            ends.append(v)
        rate = r.get(lraw, p, "rate_bps", _NUM, check=lambda v: v > 0, msg="link rate must be positive")
        prop = r.get(lraw, p, "prop_delay_s", _NUM, 0.0, lambda v: v >= 0, "must be non-negative")
        if ends[0] is not None and ends[0] == ends[1]:
            r.err(f"{p}.b", "a link needs two distinct endpoints")
            continue
        if None in ends or rate is None or prop is None:
            continue
        links.append(LinkSpec(ends[0], ends[1], rate, float(prop)))

    traffic: list[TrafficSpec] = []
    classes = {c.value for c in TrafficClass}
    for i, traw in enumerate(r.get(raw, "", "traffic", (list,), []) or []):
        p = f"traffic[{i}]"
        traw = r.table(traw, p, _TRAFFIC_KEYS)
        cls = r.get(traw, p, "class", (str,), check=lambda v: v in classes, msg=f"must be one of {sorted(classes)}")
        ends = []
        for key in ("src", "dst"):
            v = r.get(traw, p, key, (str,))
            if v is not None and v not in ids:
                r.err(f"{p}.{key}", f"unknown node {v!r}")
                v = None
            ends.append(v)
        kw = dict(
            rate_pps=r.get(traw, p, "rate_pps", _NUM),
            packet_size_bytes=r.get(traw, p, "packet_size_bytes", (int,)),
            start_s=r.get(traw, p, "start_s", _NUM, 0.0),
            stop_s=r.get(traw, p, "stop_s", _NUM, duration if duration is not None else 480.0),
            tos=r.get(traw, p, "tos", (int,), None),
            pattern=r.get(traw, p, "pattern", (str,), "cbr", lambda v: v in ("cbr", "onoff"), "must be cbr or onoff"),
            on_s=r.get(traw, p, "on_s", _NUM, 0.0),
            off_s=r.get(traw, p, "off_s", _NUM, 0.0),
            jitter_seed=r.get(traw, p, "jitter_seed", (int,), None),
        )
        if cls is None or None in ends or any(kw[k] is None for k in ("rate_pps", "packet_size_bytes", "start_s", "stop_s", "pattern", "on_s", "off_s")):
            continue
        spec = TrafficSpec(cls, ends[0], ends[1], **kw)
        problems = spec.problems()
        for fld, problem in problems:
            r.err(f"{p}.{fld}", problem)
        if not problems:
            traffic.append(spec)

    if r.diags:
        raise ScenarioError(r.diags)

    cfg = ScenarioConfig(
        name=name,
        nodes=tuple(nodes),
        links=tuple(links),
        traffic=tuple(traffic),
        qdisc=qdisc,
        duration_s=float(duration),
        seed=seed,
        warmup_s=float(warmup),
        itu=itu,
        output_dir=output_dir,
    )
    validate_graph(cfg, r)
    if r.diags:
        raise ScenarioError(r.diags)
    return cfg


def validate_graph(cfg: ScenarioConfig, r: _Reader | None = None) -> list[Diagnostic]:
    """Connectivity and route checks; returns the diagnostics it found."""
    r = r or _Reader("")
    before = len(r.diags)
    if not cfg.nodes:
        r.err("nodes", "scenario has no nodes")
        return r.diags[before:]
    net = cfg.network()
    n = net.n_nodes
    for j in range(1, n):
        if net.route[0, j] < 0 or net.route[j, 0] < 0:
            r.err("links", f"topology is not connected: {net.node_ids[j]!r} cannot reach {net.node_ids[0]!r}")
            break
    index = {nid: i for i, nid in enumerate(net.node_ids)}
    for i, t in enumerate(cfg.traffic):
        s, d = index[t.src], index[t.dst]
        if s != d and net.route[s, d] < 0:
            r.err(f"traffic[{i}].dst", f"{t.dst!r} is unreachable from {t.src!r}")
    return r.diags[before:]


def load_scenario(path_or_name: str | Path) -> ScenarioConfig:
    """Load a scenario file, or a bundled one by name."""
    key = str(path_or_name)
    if key in BUNDLED and not Path(key).exists():
        text = resources.files("voipqos.scenarios").joinpath(f"{key}.toml").read_text(encoding="utf-8")
    else:
        text = Path(path_or_name).read_text(encoding="utf-8")
    return parse_scenario(text)


# --- the two-site company network ----------------------------------------------------


def two_site_topology(expanded: bool = False, discipline: str = "fifo", duration_s: float = 480.0) -> ScenarioConfig:
    """Two identical sites joined through an IP cloud.

    Each site has three floors (one switch each), a main switch and a router
    whose DS1 port faces the cloud. With ``expanded`` every floor carries 15
    hosts; otherwise one aggregate host per floor stands in for them. Voice
    totals 400 packets/s network-wide (200 each way) on evenly interleaved
    phases, and each site also sends one FTP and one video stream across.
    """
    sites = ("A", "B")
    nodes: list[NodeSpec] = []
    links: list[LinkSpec] = []
    hosts: dict[tuple[str, int], list[str]] = {}
    for s in sites:
        for f in range(FLOORS):
            sw = f"{s}-sw{f}"
            nodes.append(NodeSpec(sw, NodeKind.SWITCH))
            if expanded:
                hosts[s, f] = [f"{s}-f{f}-h{i:02d}" for i in range(HOSTS_PER_FLOOR)]
            else:
                hosts[s, f] = [f"{s}-floor{f}"]
            for h in hosts[s, f]:
                nodes.append(NodeSpec(h, NodeKind.HOST))
                links.append(LinkSpec(h, sw, TENBASET_BPS))
        nodes.append(NodeSpec(f"{s}-main", NodeKind.SWITCH))
        nodes.append(NodeSpec(f"{s}-router", NodeKind.ROUTER))
        for f in range(FLOORS):
            links.append(LinkSpec(f"{s}-sw{f}", f"{s}-main", TENBASET_BPS))
        links.append(LinkSpec(f"{s}-main", f"{s}-router", TENBASET_BPS))
    nodes.append(NodeSpec("cloud", NodeKind.CLOUD, DEFAULT_CLOUD_DELAY_S))
    for s in sites:
        links.append(LinkSpec(f"{s}-router", "cloud", DS1_BPS))

    voice_hosts = [
        (si, f, h) for f in range(FLOORS) for si, s in enumerate(sites) for h in range(len(hosts[s, f]))
    ]
    n_voice = len(voice_hosts)
    traffic: list[TrafficSpec] = []
    for si, f, h in voice_hosts:
        s, other = sites[si], sites[1 - si]
        # site A takes even phase slots, site B odd; slot j starts at j/400 s
        slot = 2 * (f * len(hosts[s, f]) + h) + si
        traffic.append(TrafficSpec(
            TrafficClass.VOICE, hosts[s, f][h], hosts[other, f][h],
            rate_pps=VOICE_TOTAL_PPS / n_voice, packet_size_bytes=VOICE_PACKET_BYTES,
            start_s=slot / VOICE_TOTAL_PPS, stop_s=duration_s,
        ))
    for si, s in enumerate(sites):
        other = sites[1 - si]
        traffic.append(TrafficSpec(TrafficClass.FTP, hosts[s, 0][0], hosts[other, 0][0],
                                   rate_pps=FTP_PPS, packet_size_bytes=FTP_BYTES, stop_s=duration_s))
        traffic.append(TrafficSpec(TrafficClass.VIDEO, hosts[s, 1][0], hosts[other, 1][0],
                                   rate_pps=VIDEO_PPS, packet_size_bytes=VIDEO_BYTES, stop_s=duration_s))
    traffic.sort(key=lambda t: (t.traffic_class != TrafficClass.VOICE, t.start_s))
    return ScenarioConfig(
        name="paper-topology-expanded" if expanded else "paper-topology",
        nodes=tuple(nodes),
        links=tuple(links),
        traffic=tuple(traffic),
        qdisc=QdiscConfig(discipline=discipline),
        duration_s=float(duration_s),
    )

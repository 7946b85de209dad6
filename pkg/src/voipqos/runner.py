"""Run orchestration and report emission (CSV series, summary tables, key/value files)."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .backend import simulate
from .engine import InvariantViolation
from .metrics import QosReport, Verdict, build_report
from .qdisc import Discipline
from .scenario import ScenarioConfig
from .traffic import CLASS_ORDER, TrafficClass

SERIES_COLUMNS = ("time_bin_s", "class", "sent_pps", "received_pps")
SUMMARY_COLUMNS = ("class", "metric", "value", "verdict")
DISCIPLINES = (Discipline.FIFO, Discipline.PQ, Discipline.WFQ)


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def with_overrides(
    cfg: ScenarioConfig,
    qdisc: str | None = None,
    duration_s: float | None = None,
    seed: int | None = None,
) -> ScenarioConfig:
    """Apply CLI overrides. Sources that ran to the old end keep running to the new one."""
    if qdisc is not None:
        cfg = cfg.with_qdisc(qdisc)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if duration_s is not None and duration_s != cfg.duration_s:
        old = cfg.duration_s
        traffic = tuple(replace(t, stop_s=duration_s) if t.stop_s >= old else t for t in cfg.traffic)
        cfg = replace(cfg, duration_s=float(duration_s), traffic=traffic,
                      warmup_s=min(cfg.warmup_s, duration_s / 2))
    return cfg


def run(cfg: ScenarioConfig, backend: str | None = None) -> QosReport:
    inp = cfg.sim_input()
    log = simulate(inp, backend)
    return build_report(inp, log, cfg.qdisc.discipline.value, cfg.warmup_s, cfg.itu)


def _run_one(args) -> QosReport:
    cfg, backend = args
    return run(cfg, backend)


@dataclass
class ComparisonResult:
    reports: dict[Discipline, QosReport]
    digests: dict[Discipline, str]

    def __getitem__(self, d) -> QosReport:
        return self.reports[Discipline(d)]


def compare(cfg: ScenarioConfig, backend: str | None = None, parallel: bool = True) -> ComparisonResult:
    """Run FIFO, PQ and WFQ on otherwise identical copies of ``cfg``."""
    configs = {d: cfg.with_qdisc(d.value) for d in DISCIPLINES}
    digests = {d: c.digest(ignore_discipline=True) for d, c in configs.items()}
    if len(set(digests.values())) != 1:
        raise InvariantViolation("comparison scenarios differ outside the qdisc discipline")
    jobs = [(configs[d], backend) for d in DISCIPLINES]
    if parallel:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    return ComparisonResult(dict(zip(DISCIPLINES, reports)), digests)


# --- rendering -----------------------------------------------------------------------


def series_csv(report: QosReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    classes = [c for c in CLASS_ORDER if c in report.classes]
    n = max((len(report.classes[c].sent_series) for c in classes), default=0)
    for b in range(n):
        for c in classes:
            cr = report.classes[c]
            w.writerow((b, c.value, int(cr.sent_series[b]), int(cr.received_series[b])))
    return buf.getvalue()


def summary_rows(report: QosReport) -> list[tuple[str, str, str, str]]:
    rows = []
    for c in CLASS_ORDER:
        if c not in report.classes:
            continue
        cr = report.classes[c]
        vd, vj, vl = cr.verdicts
        rows += [
            (c.value, "delay_s", fmt(cr.delay), vd.value),
            (c.value, "jitter_s", fmt(cr.jitter), vj.value),
            (c.value, "loss_pct", fmt(cr.loss_pct), vl.value),
            (c.value, "sent", fmt(cr.loss.sent), ""),
            (c.value, "delivered", fmt(cr.loss.delivered), ""),
            (c.value, "lost", fmt(cr.loss.lost), ""),
            (c.value, "in_flight", fmt(cr.loss.in_flight), ""),
            (c.value, "sent_pps", fmt(cr.sent_pps), ""),
            (c.value, "received_pps", fmt(cr.received_pps), ""),
        ]
    return rows


def summary_csv(report: QosReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(summary_rows(report))
    return buf.getvalue()


def summary_kv(report: QosReport, prefix: str = "") -> str:
    lines = []
    for cls, metric, value, verdict in summary_rows(report):
        lines.append(f"{prefix}{cls}.{metric}={value}")
        if verdict:
            lines.append(f"{prefix}{cls}.{metric}.verdict={verdict}")
    return "\n".join(lines) + "\n"


def summary_text(report: QosReport) -> str:
    out = [f"discipline: {report.discipline}   duration: {report.duration_s:g} s   warm-up: {report.warmup_s:g} s"]
    out.append(f"{'class':<11}{'delay (s)':>12}{'jitter (s)':>13}{'loss (%)':>10}{'sent/s':>9}{'recv/s':>9}  verdicts (delay/jitter/loss)")
    for c in CLASS_ORDER:
        if c not in report.classes:
            continue
        cr = report.classes[c]
        out.append(
            f"{c.value:<11}{_cell(cr.delay, '.5f'):>12}{_cell(cr.jitter, '.5f'):>13}{_cell(cr.loss_pct, '.2f'):>10}"
            f"{_cell(cr.sent_pps, 'g'):>9}{_cell(cr.received_pps, 'g'):>9}  "
            + "/".join(v.value for v in cr.verdicts)
        )
    return "\n".join(out) + "\n"


def _cell(v, spec: str) -> str:
    return "-" if v is None else format(v, spec)


TABLE_ROWS = (
    ("Voice Jitter (sec)", "jitter", ".5f"),
    ("Voice Packet End-to-End Delay (sec)", "delay", ".4f"),
    ("Voice Traffic Received (packets/sec)", "received_pps", "g"),
    ("Voice Traffic Sent (packets/sec)", "sent_pps", "g"),
    ("Voice Packet Loss (%)", "loss_pct", ".2f"),
)


def comparison_table(result: ComparisonResult) -> str:
    width = max(len(r[0]) for r in TABLE_ROWS) + 2
    head = f"{'Parameters':<{width}}" + "".join(f"{d.value.upper():>12}" for d in DISCIPLINES)
    lines = [head]
    for label, attr, spec in TABLE_ROWS:
        cells = []
        for d in DISCIPLINES:
            v = getattr(result[d][TrafficClass.VOICE], attr)
            cells.append(f"{_cell(v, spec):>12}")
        lines.append(f"{label:<{width}}" + "".join(cells))
    verdict_line = f"{'ITU verdict (delay/jitter/loss)':<{width}}"
    for d in DISCIPLINES:
        vd, vj, vl = result[d][TrafficClass.VOICE].verdicts
        verdict_line += f"{_short(vd) + '/' + _short(vj) + '/' + _short(vl):>12}"
    lines.append(verdict_line)
    return "\n".join(lines) + "\n"


def _short(v: Verdict) -> str:
    return {Verdict.PASS_PREFERRED: "ok", Verdict.PASS_MAXIMUM: "max", Verdict.FAIL: "FAIL", Verdict.ABSENT: "-"}[v]


def comparison_kv(result: ComparisonResult) -> str:
    return "".join(summary_kv(result[d], prefix=f"{d.value}.") for d in DISCIPLINES)


def write_run(report: QosReport, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "series.csv": series_csv(report),
        "summary.csv": summary_csv(report),
        "summary.kv": summary_kv(report),
    }
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8", newline="\n")
        paths.append(p)
    return paths


def write_comparison(result: ComparisonResult, out: Path) -> list[Path]:
    paths = []
    for d in DISCIPLINES:
        paths += write_run(result[d], out / d.value)
    for name, text in (("comparison.txt", comparison_table(result)), ("comparison.kv", comparison_kv(result))):
        p = out / name
        p.write_text(text, encoding="utf-8", newline="\n")
        paths.append(p)
    return paths

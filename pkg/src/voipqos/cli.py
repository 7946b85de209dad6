"""Command line: ``voipqos run | compare | validate``.

Exit codes: 0 success, 1 scenario validation failure, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import runner
from .backend import AVAILABLE
from .engine import InvariantViolation
from .scenario import BUNDLED, ScenarioError, load_scenario

log = logging.getLogger("voipqos")

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voipqos", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    scen_help = f"scenario file, or a bundled name ({', '.join(BUNDLED)})"

    p = sub.add_parser("run", help="simulate one discipline")
    p.add_argument("--scenario", required=True, help=scen_help)
    p.add_argument("--qdisc", choices=["fifo", "pq", "wfq"])
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="directory for series.csv / summary.csv / summary.kv")
    p.add_argument("--backend", choices=AVAILABLE)

    p = sub.add_parser("compare", help="simulate FIFO, PQ and WFQ on the same scenario")
    p.add_argument("--scenario", required=True, help=scen_help)
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--serial", action="store_true", help="run the three simulations one after another")
    p.add_argument("--backend", choices=AVAILABLE)

    p = sub.add_parser("validate", help="parse and check a scenario")
    p.add_argument("--scenario", required=True, help=scen_help)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_scenario(args.scenario)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"{args.scenario}: {d}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        net = cfg.network()
        print(f"{cfg.name}: ok ({net.n_nodes} nodes, {len(cfg.links)} links, {len(cfg.traffic)} sources)")
        return EXIT_OK

    try:
        if args.command == "run":
            cfg = runner.with_overrides(cfg, args.qdisc, args.duration, args.seed)
            report = runner.run(cfg, args.backend)
            sys.stdout.write(runner.summary_text(report))
            out = args.out or (Path(cfg.output_dir) if cfg.output_dir else None)
            if out is not None:
                for p in runner.write_run(report, out):
                    log.info("wrote %s", p)
        else:
            cfg = runner.with_overrides(cfg, None, args.duration, args.seed)
            result = runner.compare(cfg, args.backend, parallel=not args.serial)
            sys.stdout.write(runner.comparison_table(result))
            out = args.out or (Path(cfg.output_dir) if cfg.output_dir else None)
            if out is not None:
                for p in runner.write_comparison(result, out):
                    log.info("wrote %s", p)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"{args.scenario}: {d}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantViolation as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

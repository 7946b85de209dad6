"""Events per second of the compiled kernel against the pure-Python loop.

    python benchmarks/bench_backends.py --duration 30 --repeat 3
"""

import argparse
import statistics
import time

from voipqos.backend import AVAILABLE, simulate
from voipqos.scenario import BUNDLED, load_scenario
from voipqos.runner import with_overrides


def bench(inp, backend, repeat):
    best = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        log = simulate(inp, backend)
        best.append(time.perf_counter() - t0)
    return log, min(best), statistics.median(best)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=BUNDLED[0])
    ap.add_argument("--duration", type=float, default=30.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = load_scenario(args.scenario)
    print(f"scenario {args.scenario}, {args.duration:g} s simulated, best of {args.repeat}")
    print(f"{'qdisc':<6}{'backend':<9}{'events':>10}{'best (s)':>11}{'median (s)':>12}{'Mev/s':>9}")
    for disc in ("fifo", "pq", "wfq"):
        inp = with_overrides(cfg, disc, args.duration).sim_input()
        logs = {}
        for backend in AVAILABLE:
            log, best, med = bench(inp, backend, args.repeat)
            logs[backend] = (log, best)
            print(f"{disc:<6}{backend:<9}{log.n_events:>10}{best:>11.4f}{med:>12.4f}{log.n_events / best / 1e6:>9.2f}")
        if len(logs) == 2:
            (py, tpy), (cy, tcy) = logs["python"], logs["cython"]
            same = "identical logs" if py.same_as(cy) else "LOGS DIFFER"
            print(f"{'':<6}speedup {tpy / tcy:.1f}x, {same}")


if __name__ == "__main__":
    main()

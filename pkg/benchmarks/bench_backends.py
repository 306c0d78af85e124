"""Benchmark the numba kernel against the pure-numpy fallback.

Runs the shipped four-agent scenario on both backends and reports wall
time, speedup, and the worst state deviation between the two:

    python3 benchmarks/bench_backends.py [--t-end 25.0] [--repeat 3]

The first numba call includes JIT compilation; it is reported separately
(and cached on disk by numba for later processes).
"""

import argparse
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cdlfleet import engine  # noqa: E402
from cdlfleet.config import default_fleet_config  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-end", type=float, default=25.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    from dataclasses import replace

    cfg = default_fleet_config()
    cfg = replace(cfg, sim=replace(cfg.sim, t_end=args.t_end))
    n_steps = int(round(args.t_end / cfg.sim.dt))
    print(f"scenario: {cfg.n_agents} agents, {n_steps} steps of {cfg.sim.dt} s, "
          f"{cfg.lattice().size}-node RBF")

    t0 = time.perf_counter()
    log_nb = engine.run_learning(cfg, backend="numba")
    cold = time.perf_counter() - t0
    print(f"numba cold (incl. JIT): {cold:8.3f} s")

    results = {}
    for backend in ("numba", "numpy"):
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            log = engine.run_learning(cfg, backend=backend)
            times.append(time.perf_counter() - t0)
        results[backend] = (min(times), log)
        print(f"{backend:>5} best of {args.repeat}: {min(times):8.3f} s")

    dev = np.abs(results["numba"][1].final_state - results["numpy"][1].final_state).max()
    speedup = results["numpy"][0] / results["numba"][0]
    print(f"speedup (numpy/numba): {speedup:6.1f}x")
    print(f"max |final state difference|: {dev:.3e}")
    if not np.all(np.isfinite(log_nb.final_state)):
        raise SystemExit("non-finite state in benchmark run")


if __name__ == "__main__":
    main()

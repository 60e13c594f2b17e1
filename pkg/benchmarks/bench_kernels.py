#!/usr/bin/env python3
"""Benchmark the compiled revision kernel against the pure-Python twin.

Both backends consume the same random stream and must produce identical
trajectories; the benchmark verifies that while timing a realistic
workload (the bundled 40-household population, preferences shifted so
plenty of switches are accepted).

Usage: python3 benchmarks/bench_kernels.py [--steps N]
"""
import argparse
import time

import numpy as np

from loadshift import kernels
from loadshift.game import (
    PriceModel,
    ProtocolParams,
    StopRule,
    StrategySet,
    run_period_game,
)
from loadshift.runner import prepare
from loadshift.scenario import load_bundled


def workload(backend: str, steps: int, products):
    protocol = ProtocolParams(eta=0.14, restrict_prob=0.9)
    stop = StopRule(window_factor=10**9, max_steps=steps)  # never stop early
    theta_eff = np.clip(products.preferences.theta[:, :, 3] - 0.3, 0.0, 1.0)
    rng = np.random.default_rng(12345)
    start = time.perf_counter()
    result = run_period_game(
        products.households,
        period=3,
        period_hours=6.0,
        price=products.price,
        strategy=products.strategy,
        protocol=protocol,
        stop=stop,
        rng=rng,
        theta_eff=theta_eff,
        gamma=2.0,
        backend=backend,
    )
    elapsed = time.perf_counter() - start
    return elapsed, result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=300_000,
                        help="revision opportunities per backend")
    args = parser.parse_args()

    print("preparing the bundled 40-household population ...")
    products = prepare(load_bundled("natural-40"))
    backends = ["python"] + (["compiled"] if kernels.have_compiled() else [])
    if len(backends) == 1:
        print("compiled kernel not available; timing the fallback only")

    results = {}
    for backend in backends:
        elapsed, result = workload(backend, args.steps, products)
        rate = args.steps / elapsed
        results[backend] = (elapsed, result)
        print(
            f"{backend:9s} {args.steps:>9d} steps in {elapsed:7.3f}s "
            f"({rate / 1e6:6.2f}M steps/s, {result.accepted} accepted)"
        )

    if len(backends) == 2:
        py, comp = results["python"], results["compiled"]
        same = np.array_equal(
            py[1].q_trajectory, comp[1].q_trajectory
        ) and np.array_equal(py[1].state.level_idx, comp[1].state.level_idx)
        print(f"identical trajectories: {same}")
        print(f"speedup: {py[0] / comp[0]:.1f}x")
        if not same:
            raise SystemExit("backends diverged; fix before trusting timings")


if __name__ == "__main__":
    main()

"""
  Benchmarking LP Backends
============================

This module compares the built-in simplex against scipy's HiGHS as the LP
relaxation inside branch-and-bound, by running the same small scenarios
under each strategy.

Run from the repository root:

    python -m benchmark.bench_backends [cavs]
"""

import sys
import time

from intersim.core.geometry import IntersectionGeometry
from intersim.core.planner import PlannerConfig
from intersim.core.sim import STRATEGIES, ScenarioConfig, run_scenario

BACKENDS = ('simplex', 'highs')
SEEDS = range(3)


def _config(strategy, backend, cavs, seed):
    return ScenarioConfig(
        strategy=strategy,
        cavs=cavs,
        seed=seed,
        lp_backend=backend,
        geometry=IntersectionGeometry(pre_danger_radius=60.0, danger_radius=30.0),
        planner=PlannerConfig(horizon=24),
    )


def _measure(strategy, backend, cavs):
    wall = solver = 0.0
    solves = 0
    for seed in SEEDS:
        start = time.time()
        _trace, report = run_scenario(_config(strategy, backend, cavs, seed))
        wall += time.time() - start
        solver += report.solver_seconds
        solves += sum(report.reoptimizations)
    return wall / len(SEEDS), solver / max(solves, 1)


def main(cavs=6):
    for strategy in STRATEGIES:
        print(f"{strategy} - {cavs} CAVs, {len(SEEDS)} seeds")
        for backend in BACKENDS:
            wall, per_solve = _measure(strategy, backend, cavs)
            print(f"    * {backend:8}: {wall:.3f}s per run, {per_solve * 1000:.2f}ms per solve")


if __name__ == '__main__':
    main(*map(int, sys.argv[1:2]))

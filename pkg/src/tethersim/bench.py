"""Fixed-seed benchmark: solve-time distributions per strategy and guess win rates.

Numerical timings are end-to-end for one time step: initial-state
construction plus the Newton solve, and for the analytical initialisation
also the analytical solve that provides it. Only ratios between strategies are
meant to be compared across machines.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .analytical import GUESS_ORDER, build_guesses, solve_catenary, solve_with_drag
from .core import PlanarBoundary, TetherSpec
from .errors import SolverError
from .forces import default_providers
from .numerical import (
    DEFAULT_SEGMENTS,
    Environment,
    EquilibriumSolver,
    discretize,
    init_from_analytical,
    should_fallback,
    straight_line_init,
    warm_start,
)
from .pipeline import timing_stats
from .rootfind import RootOptions

STRATEGIES = ("analytical", "numerical_analytical_init", "numerical_warm_start", "numerical_straight_line")


def default_spec() -> TetherSpec:
    return TetherSpec.from_total_mass(32.0, 0.45, 0.003)


def scenario_walk(spec: TetherSpec, n_steps: int = 200, seed: int = 0, step: float = 0.1,
                  max_speed: float = 8.0) -> list[PlanarBoundary]:
    """Random walk of the drone around a fixed base, with a drifting airspeed.

    Positions stay reachable (chord below 97% of L) and away from vertical
    (``d_x >= 0.05 L``); consecutive states move far less than the warm-start
    threshold.
    """
    rng = np.random.default_rng(seed)
    L = spec.length
    pos = np.array([0.4 * L, 0.6 * L])
    v = 0.0
    out = []
    for _ in range(n_steps):
        for _ in range(20):
            trial = pos + rng.normal(0.0, step, 2)
            if 0.05 * L <= trial[0] and math.hypot(*trial) <= 0.97 * L and trial[1] > -0.5 * L:
                pos = trial
                break
        v = float(np.clip(v + rng.normal(0.0, 0.4), -max_speed, max_speed))
        out.append(PlanarBoundary((0.0, 0.0), (float(pos[0]), float(pos[1])), v))
    return out


def random_geometries(length: float, n: int, seed: int = 0, dx_range=(0.05, 0.999),
                      dy_range=(-0.9, 0.9)) -> list[PlanarBoundary]:
    """Independent reachable boundaries with ``d_x/L`` and ``d_y/L`` drawn uniformly.

    ``d_y`` is clipped to keep the chord strictly shorter than ``L``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        dx = rng.uniform(*dx_range) * length
        dy = rng.uniform(*dy_range) * length
        dy_max = 0.999 * math.sqrt(length * length - dx * dx)
        dy = float(np.clip(dy, -dy_max, dy_max))
        x1, y1 = rng.uniform(-10.0, 10.0, 2)
        out.append(PlanarBoundary((float(x1), float(y1)), (float(x1 + dx), float(y1 + dy))))
    return out


def guess_win_table(geometries, length: float, tol: float = 1e-8) -> dict:
    """Share of geometries where each tabulated guess is the cheapest to converge.

    Every guess is run on its own; the winner is the one needing the fewest
    Newton iterations (iteration counts are deterministic, wall times are
    not). Ties split the credit evenly, so the percentages sum to 100.
    """
    wins = Counter({label: 0.0 for label in GUESS_ORDER})
    counted = 0
    for bc in geometries:
        cost = {}
        for guess in build_guesses(bc, length):
            if guess.label not in GUESS_ORDER:
                continue
            try:
                cost[guess.label] = solve_catenary(bc, length, tol, guesses=[guess]).diagnostics.iterations
            except SolverError:
                pass
        if not cost:
            continue
        best = min(cost.values())
        winners = [k for k, c in cost.items() if c == best]
        for k in winners:
            wins[k] += 1.0 / len(winners)
        counted += 1
    return {
        "n_geometries": counted,
        "percent": {k: 100.0 * wins[k] / counted if counted else 0.0 for k in GUESS_ORDER},
    }


@dataclass
class BenchResult:
    times: dict = field(default_factory=lambda: {k: [] for k in STRATEGIES})
    iterations: dict = field(default_factory=lambda: {k: [] for k in STRATEGIES})
    skipped_fallback: int = 0
    failures: Counter = field(default_factory=Counter)
    win_table: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def stats(self) -> dict:
        return {k: dict(timing_stats(v), n=len(v)) for k, v in self.times.items()}

    def median(self, strategy) -> float:
        return float(np.median(self.times[strategy]))

    def report(self) -> dict:
        it = {k: float(np.mean(v)) if v else None for k, v in self.iterations.items()}
        return {
            "timing": self.stats(),
            "mean_iterations": it,
            "skipped_fallback": self.skipped_fallback,
            "failures": dict(self.failures),
            "guess_win_rate": self.win_table,
            "runtime_s": self.runtime_s,
        }


def run_bench(spec: TetherSpec | None = None, n_steps: int = 200, n_segments: int = DEFAULT_SEGMENTS,
              tol: float = 1e-8, seed: int = 0, n_guess_geometries: int = 300) -> BenchResult:
    spec = spec or default_spec()
    t_start = time.perf_counter()
    model = discretize(spec, n_segments)
    solver = EquilibriumSolver(model, default_providers(), RootOptions(tol=tol, max_iters=200, lm_fallback=True))
    res = BenchResult()
    previous = None

    def numerical(label, bc, env, make_init, extra_time=0.0):
        t0 = time.perf_counter()
        init = make_init()
        t_init = time.perf_counter() - t0
        try:
            sol, state = solver.solve(bc, env, init, label)
        except SolverError as exc:
            res.failures[f"{label}: {type(exc).__name__}"] += 1
            return None
        res.times[label].append(extra_time + t_init + sol.diagnostics.solve_time)
        res.iterations[label].append(sol.diagnostics.iterations)
        return state

    for bc in scenario_walk(spec, n_steps, seed):
        env = Environment(bc.airspeed)
        try:
            ana = solve_with_drag(bc, spec, tol)
        except SolverError as exc:
            res.failures[f"analytical: {type(exc).__name__}"] += 1
            previous = None
            continue
        res.times["analytical"].append(ana.diagnostics.solve_time)
        res.iterations["analytical"].append(ana.diagnostics.iterations)
        if should_fallback(bc, spec, env, n_segments):
            res.skipped_fallback += 1
            previous = None
            continue
        state = numerical("numerical_analytical_init", bc, env, lambda: init_from_analytical(ana, model),
                          ana.diagnostics.solve_time)
        if previous is not None:
            warm = numerical("numerical_warm_start", bc, env, lambda: warm_start(previous, bc, n_segments))
            state = warm if warm is not None else state
        numerical("numerical_straight_line", bc, env, lambda: straight_line_init(bc, model))
        previous = state

    res.win_table = guess_win_table(random_geometries(spec.length, n_guess_geometries, seed + 1), spec.length, tol)
    res.runtime_s = time.perf_counter() - t_start
    return res


def format_report(res: BenchResult) -> str:
    lines = [f"{'strategy':<28}{'n':>6}{'mean ms':>10}{'median ms':>11}{'p95 ms':>9}{'iters':>8}"]
    for k, st in res.stats().items():
        if not st["n"]:
            lines.append(f"{k:<28}{0:>6}")
            continue
        it = np.mean(res.iterations[k])
        lines.append(f"{k:<28}{st['n']:>6}{1e3 * st['mean_solve_s']:>10.3f}{1e3 * st['median_solve_s']:>11.3f}"
                     f"{1e3 * st['p95_solve_s']:>9.3f}{it:>8.1f}")
    lines.append(f"skipped (fallback rule): {res.skipped_fallback}")
    if res.failures:
        lines.append("failures: " + ", ".join(f"{k} x{v}" for k, v in sorted(res.failures.items())))
    wt = res.win_table
    lines.append(f"guess win rate over {wt.get('n_geometries', 0)} geometries (fewest Newton iterations)")
    for label, pct in wt.get("percent", {}).items():
        lines.append(f"  {label:<16}{pct:6.1f} %")
    lines.append(f"bench runtime {res.runtime_s:.1f} s")
    return "\n".join(lines)

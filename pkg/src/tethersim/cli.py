"""Command-line front end: ``tethersim solve | replay | compare | bench``.

All outputs go under ``--out`` (default ``./out``). Every run writes a JSON
file whose ``config`` entry reproduces the run.

Exit codes: 0 success, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import AIR_DENSITY, PlanarBoundary, TetherSpec
from .errors import InputError, SolverError
from .numerical import Environment
from .simulator import INIT_POLICIES, TetherSimulator

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
METHODS = ("analytical", "numerical", "both")


@dataclass
class RunConfig:
    command: str
    length: float
    mass: float
    diameter: float = 0.003
    cd: float = 1.2
    rho: float = AIR_DENSITY
    method: str = "both"
    segments: int = 60
    init: str = "auto"
    tol: float = 1e-8
    out: str = "out"
    inertia: bool = False
    p1: tuple | None = None
    p2: tuple | None = None
    wind: float = 0.0
    log: str | None = None
    synthetic: bool = False
    seed: int = 0
    steps: int = 200

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InputError(f"--method must be one of {METHODS}")
        if self.init not in INIT_POLICIES:
            raise InputError(f"--init must be one of {INIT_POLICIES}")
        if self.segments < 2:
            raise InputError("--segments must be at least 2")
        if not self.tol > 0:
            raise InputError("--tol must be positive")
        if not math.isfinite(self.wind):
            raise InputError("--wind must be finite")
        self.spec()  # parameter checks live in TetherSpec
        if self.command == "solve" and (self.p1 is None or self.p2 is None):
            raise InputError("solve needs --p1 and --p2")
        if self.command in ("replay", "compare") and not self.log and not self.synthetic:
            raise InputError(f"{self.command} needs --log FILE or --synthetic")

    def spec(self) -> TetherSpec:
        return TetherSpec.from_total_mass(self.length, self.mass, self.diameter,
                                          drag_coefficient=self.cd, air_density=self.rho)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = __version__
        return d


def _point(text: str):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return (x, y)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("tether")
    g.add_argument("--length", type=float, default=32.0, help="tether length [m] (default 32)")
    g.add_argument("--mass", type=float, default=0.45, help="total tether mass [kg] (default 0.45)")
    g.add_argument("--diameter", type=float, default=0.003, help="tether diameter [m] (default 0.003)")
    g.add_argument("--cd", type=float, default=1.2, help="drag coefficient (default 1.2)")
    g.add_argument("--rho", type=float, default=AIR_DENSITY, help="air density [kg/m^3]")
    s = common.add_argument_group("solver")
    s.add_argument("--method", choices=METHODS, default="both")
    s.add_argument("--segments", type=int, default=60, help="lumped-mass segments N (default 60)")
    s.add_argument("--init", choices=INIT_POLICIES, default="auto", help="numerical initialisation")
    s.add_argument("--tol", type=float, default=1e-8, help="residual tolerance (default 1e-8)")
    s.add_argument("--inertia", action="store_true", help="include the drone-acceleration term")
    common.add_argument("--out", default="out", help="output directory (default ./out)")

    parser = argparse.ArgumentParser(prog="tethersim", description="Quasi-static tether shape and tension.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve one planar configuration")
    p.add_argument("--p1", type=_point, required=True, help="base point x,y [m]")
    p.add_argument("--p2", type=_point, required=True, help="drone point x,y [m]")
    p.add_argument("--wind", type=float, default=0.0, help="horizontal airspeed along +x [m/s]")

    for name, text in (("replay", "replay a flight log"), ("compare", "replay with both methods and diff them")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--log", help="flight log CSV")
        p.add_argument("--synthetic", action="store_true", help="use the built-in synthetic flight")
        p.add_argument("--seed", type=int, default=0, help="seed of the synthetic flight")

    p = sub.add_parser("bench", parents=[common], help="timing and guess statistics on a fixed-seed family")
    p.add_argument("--steps", type=int, default=200, help="time steps of the scenario walk")
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in fields})
    if cfg.command == "compare":
        cfg.method = "both"
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serializable: {type(o).__name__}")


def _solution_summary(sol) -> dict:
    d = sol.diagnostics
    return {
        "method": sol.method.value,
        "start_tension_N": sol.start_tension,
        "end_tension_N": sol.end_tension,
        "start_force_N": list(map(float, sol.start_force)),
        "end_force_N": list(map(float, sol.end_force)),
        "iterations": d.iterations,
        "residual_norm": d.residual_norm,
        "solve_time_s": d.solve_time,
        "guess_used": d.guess_used,
        "init_strategy": d.init_strategy,
        "drag_iterations": d.drag_iterations,
    }


def cmd_solve(cfg: RunConfig) -> int:
    spec = cfg.spec()
    bc = PlanarBoundary(cfg.p1, cfg.p2, cfg.wind)
    bc.check_reachable(spec.length)
    sim = TetherSimulator(spec, cfg.segments, cfg.tol, cfg.inertia, cfg.init)
    solutions = {}
    analytical = None
    if cfg.method in ("analytical", "both"):
        analytical = solutions["analytical"] = sim.solve_analytical(bc)
    if cfg.method in ("numerical", "both"):
        solutions["numerical"] = sim.solve_numerical(bc, Environment(cfg.wind), analytical)

    out = _outdir(cfg)
    with open(out / "shape.csv", "w") as fh:
        fh.write("method,s,x,y,T\n")
        for name, sol in solutions.items():
            for s, (x, y), t in zip(sol.arc, sol.points, sol.tension):
                fh.write(f"{name},{s:.10g},{x:.10g},{y:.10g},{t:.10g}\n")
    result = {"config": cfg.to_dict(), "solutions": {k: _solution_summary(v) for k, v in solutions.items()}}
    if len(solutions) == 2:
        a, n = solutions["analytical"], solutions["numerical"]
        result["difference"] = {
            "start_tension_N": n.start_tension - a.start_tension,
            "end_tension_N": n.end_tension - a.end_tension,
        }
    _write_json(result, out / "solve.json")

    for name, sol in solutions.items():
        info = _solution_summary(sol)
        print(f"{name:<11} [{info['method']}] start T = {info['start_tension_N']:.4f} N, "
              f"end T = {info['end_tension_N']:.4f} N, iters {info['iterations']}, "
              f"residual {info['residual_norm']:.2e}, {1e3 * info['solve_time_s']:.3f} ms")
        print(f"{'':<11} start force = ({sol.start_force[0]:.4f}, {sol.start_force[1]:.4f}) N, "
              f"end force = ({sol.end_force[0]:.4f}, {sol.end_force[1]:.4f}) N")
    if "difference" in result:
        d = result["difference"]
        print(f"numerical - analytical: start {d['start_tension_N']:+.4f} N, end {d['end_tension_N']:+.4f} N")
    print(f"wrote {out / 'shape.csv'} and {out / 'solve.json'}")
    return EXIT_OK


def _load_log(cfg):
    from .pipeline import read_log, synthetic_flight, write_log

    if cfg.log:
        return read_log(cfg.log)
    log = synthetic_flight(cfg.spec(), seed=cfg.seed)
    write_log(log, _outdir(cfg) / "synthetic_log.csv")
    return log


def cmd_replay(cfg: RunConfig) -> int:
    from .pipeline import (compare_series, difference_rows, replay, summarize, write_rows_csv,
                           write_series_csv)

    log = _load_log(cfg)
    series = replay(log, cfg.spec(), cfg.method, cfg.init, cfg.inertia, cfg.segments, cfg.tol)
    out = _outdir(cfg)
    summaries = []
    for name, ts in series.items():
        write_series_csv(ts, out / f"tension_{name}.csv")
        summaries.append(summarize(ts))
    result = {"config": cfg.to_dict(), "log_notes": log.notes, "methods": summaries, "method_difference": None}
    if len(series) == 2:
        result["method_difference"] = compare_series(series["analytical"], series["numerical"])
        write_rows_csv(difference_rows(series["analytical"], series["numerical"]), out / "difference.csv")
    _write_json(result, out / "summary.json")

    for s in summaries:
        med = s["median_solve_s"]
        line = f"{s['method']:<11} n={s['n_samples']} failed={s['n_failed']} fallback={s['n_fallback']}"
        if med is not None:
            line += f" median {1e3 * med:.3f} ms, p95 {1e3 * s['p95_solve_s']:.3f} ms"
        if s["mean_abs_diff_N"] is not None:
            line += f", |T - measured| mean {s['mean_abs_diff_N']:.4f} N max {s['max_abs_diff_N']:.4f} N"
        print(line)
    diff = result["method_difference"]
    if diff and diff["n_compared"]:
        print(f"numerical vs analytical over {diff['n_compared']} samples: start mean "
              f"{diff['start_mean_abs_diff_N']:.4f} N, end mean {diff['end_mean_abs_diff_N']:.4f} N "
              f"(mean end tension {diff['mean_end_tension_N']:.3f} N)")
    print(f"wrote {out / 'summary.json'}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    from .bench import format_report, run_bench

    res = run_bench(cfg.spec(), cfg.steps, cfg.segments, cfg.tol, cfg.seed)
    out = _outdir(cfg)
    _write_json({"config": cfg.to_dict(), **res.report()}, out / "bench.json")
    print(format_report(res))
    print(f"wrote {out / 'bench.json'}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "replay": cmd_replay, "compare": cmd_replay, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Per-time-step solver facade: method choice, fallback rule and initialisation policy."""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .analytical import DEFAULT_SAMPLES, solve_with_drag
from .errors import SolverError
from .core import Method, PlanarBoundary, TetherSolution, TetherSpec
from .forces import default_providers
from .numerical import (
    DEFAULT_SEGMENTS,
    Environment,
    EquilibriumSolver,
    LumpedState,
    discretize,
    init_from_analytical,
    should_fallback,
    straight_line_init,
    warm_start,
)
from .rootfind import RootOptions

INIT_POLICIES = ("auto", "analytical", "warm", "straight")
# warm start only if neither end point moved more than this fraction of L
WARM_START_MOVE = 0.05


class TetherSimulator:
    """Solves a sequence of tether states, keeping the warm-start chain.

    Parameters
    ----------
    spec : TetherSpec
    n_segments : int
        Discretization of the numerical method.
    tol : float
        Residual tolerance shared by both methods.
    inertia : bool
        Add the drone-acceleration inertial term to the numerical model.
    init_policy : str
        ``auto`` warm-starts when the previous state is close enough and uses
        the analytical solution otherwise; ``analytical``, ``warm`` and
        ``straight`` force one strategy (``warm`` degrades to ``analytical``
        when no previous state exists).
    """

    def __init__(self, spec: TetherSpec, n_segments: int = DEFAULT_SEGMENTS, tol: float = 1e-8,
                 inertia: bool = False, init_policy: str = "auto", n_samples: int = DEFAULT_SAMPLES):
        if init_policy not in INIT_POLICIES:
            raise ValueError(f"unknown init policy {init_policy!r}")
        self.spec = spec
        self.tol = tol
        self.inertia = inertia
        self.init_policy = init_policy
        self.n_samples = n_samples
        self.model = discretize(spec, n_segments)
        self.solver = EquilibriumSolver(
            self.model, default_providers(inertia), RootOptions(tol=tol, max_iters=100, lm_fallback=True)
        )
        self._previous: tuple[PlanarBoundary, LumpedState] | None = None

    @property
    def n_segments(self) -> int:
        return self.model.n_segments

    def reset(self) -> None:
        self._previous = None

    def solve_analytical(self, bc: PlanarBoundary, extra_load=None) -> TetherSolution:
        return solve_with_drag(bc, self.spec, self.tol, self.n_samples, extra_load=extra_load)

    def inertial_load(self, env: Environment):
        """Per-length inertial load of the tether, or None when it vanishes."""
        acc = np.asarray(env.drone_acceleration, dtype=float)
        if not self.inertia or not acc.any():
            return None
        return -self.spec.linear_mass * acc

    def choose_init(self, bc: PlanarBoundary) -> str:
        if self.init_policy == "straight":
            return "straight"
        if self.init_policy == "analytical" or self._previous is None:
            return "analytical"
        if self.init_policy == "warm":
            return "warm"
        prev_bc, _ = self._previous
        moved = max(np.hypot(*np.subtract(bc.p1, prev_bc.p1)), np.hypot(*np.subtract(bc.p2, prev_bc.p2)))
        return "warm" if moved < WARM_START_MOVE * self.spec.length else "analytical"

    def solve_numerical(self, bc: PlanarBoundary, env: Environment | None = None,
                        analytical: TetherSolution | None = None) -> TetherSolution:
        """Numerical solve, or the analytical solution when the fallback rule fires.

        ``analytical`` may pass an already computed analytical solution for
        the same boundary; it is reused for initialisation and fallback. With
        inertia on and a nonzero acceleration it describes the wrong load
        field and is ignored; the inertial load then joins the uniform field
        of both the fallback rule and the analytical initialisation.
        """
        if env is None:
            env = Environment(bc.airspeed)
        extra = self.inertial_load(env)
        if extra is not None:
            analytical = None
        if should_fallback(bc, self.spec, env, self.n_segments, extra):
            self.reset()
            sol = analytical if analytical is not None else self.solve_analytical(bc, extra)
            return _as_fallback(sol)

        strategy = self.choose_init(bc)
        t0 = time.perf_counter()
        if strategy == "warm":
            init = warm_start(self._previous[1], bc, self.n_segments)
        elif strategy == "straight":
            init = straight_line_init(bc, self.model)
        else:
            if analytical is None:
                analytical = self.solve_analytical(bc, extra)
            init = init_from_analytical(analytical, self.model)
        init_time = time.perf_counter() - t0

        try:
            sol, state = self.solver.solve(bc, env, init, strategy)
        except SolverError:
            self.reset()
            if strategy != "warm":
                raise
            # a stale warm start can stall; the analytical init is the safer second try
            t0 = time.perf_counter()
            if analytical is None:
                analytical = self.solve_analytical(bc, extra)
            init = init_from_analytical(analytical, self.model)
            init_time += time.perf_counter() - t0
            sol, state = self.solver.solve(bc, env, init, "analytical")
            sol.diagnostics.extra["warm_start_failed"] = True
        sol.diagnostics.extra["init_time"] = init_time
        self._previous = (bc, state)
        return sol


def _as_fallback(sol: TetherSolution) -> TetherSolution:
    diag = replace(sol.diagnostics, init_strategy="fallback", extra=dict(sol.diagnostics.extra))
    return replace(sol, method=Method.ANALYTICAL_FALLBACK, diagnostics=diag)

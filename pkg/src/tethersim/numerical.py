"""Lumped-mass / rigid-segment quasi-static equilibrium solver.

The tether is split into ``N`` rigid segments joined by point masses. The
unknowns are the interior node positions and the segment tensions; the
equations are zero net force at every interior node plus one length
constraint per segment, which gives a square system. Tensions are written as
``T = tau**2`` so the Newton iteration can never produce compression.

Unknown vector layout (interleaved to keep the Jacobian banded)::

    [tau_1, x_1, y_1, tau_2, x_2, y_2, ..., x_{N-1}, y_{N-1}, tau_N]
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .analytical import drag_load, _field_angle
from .core import Method, PlanarBoundary, SolveDiagnostics, TetherSolution, TetherSpec, weight_per_length
from .errors import (
    DimensionMismatch,
    InputError,
    NonPhysical,
    RootFindingError,
    ZeroLengthSegment,
)
from .forces import ForceKind, ForceProvider, default_providers
from .rootfind import RootOptions, RootProblem, solve_root

DEFAULT_SEGMENTS = 60
BANDWIDTH = 4
MIN_SEGMENT = 1e-12


@dataclass(frozen=True)
class Environment:
    airspeed: float = 0.0
    drone_acceleration: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True, eq=False)
class LumpedModel:
    spec: TetherSpec
    n_segments: int
    segment_length: float
    node_mass: np.ndarray

    @property
    def n_unknowns(self) -> int:
        return 3 * self.n_segments - 2


def discretize(spec: TetherSpec, n_segments: int = DEFAULT_SEGMENTS) -> LumpedModel:
    """Uniform segments; each node carries half of each adjacent segment's mass."""
    if n_segments < 2:
        raise InputError("the lumped model needs at least 2 segments")
    seg = spec.length / n_segments
    mass = np.full(n_segments + 1, spec.linear_mass * seg)
    mass[[0, -1]] *= 0.5
    mass.setflags(write=False)
    return LumpedModel(spec, n_segments, seg, mass)


@dataclass
class LumpedState:
    positions: np.ndarray  # (N+1, 2), endpoints included
    tensions: np.ndarray  # (N,)

    @property
    def n_segments(self) -> int:
        return self.tensions.size

    def copy(self) -> "LumpedState":
        return LumpedState(self.positions.copy(), self.tensions.copy())


def segment_drag_force(qa, qb, spec: TetherSpec, env: Environment) -> np.ndarray:
    """Drag on one segment: Rayleigh drag on area ``d * |dy|``, along the wind."""
    dy = abs(float(qb[1]) - float(qa[1]))
    v = env.airspeed
    return np.array([0.5 * spec.air_density * spec.drag_coefficient * spec.diameter * dy * v * abs(v), 0.0])


def inertial_node_force(model: LumpedModel, env: Environment) -> np.ndarray:
    acc = np.asarray(env.drone_acceleration, dtype=float)
    return -model.node_mass[:, None] * acc[None, :]


class EquilibriumSolver:
    """Reusable solver for one discretization and provider set.

    Index maps and band layout are built once; a single instance handles one
    solve at a time.
    """

    def __init__(self, model: LumpedModel, providers: list[ForceProvider] | None = None,
                 options: RootOptions | None = None):
        self.model = model
        self.providers = list(default_providers() if providers is None else providers)
        self.options = options or RootOptions(max_iters=100, lm_fallback=True)
        n = model.n_segments
        self.tau_idx = 3 * np.arange(n)
        self.x_idx = 3 * np.arange(n - 1) + 1
        self.y_idx = self.x_idx + 1
        self._block_cache = {}
        self._static = None

    # -- packing ---------------------------------------------------------

    def pack(self, state: LumpedState) -> np.ndarray:
        z = np.empty(self.model.n_unknowns)
        floor = 1e-3 * weight_per_length(self.model.spec) * self.model.segment_length
        z[self.tau_idx] = np.sqrt(np.maximum(state.tensions, floor))
        z[self.x_idx] = state.positions[1:-1, 0]
        z[self.y_idx] = state.positions[1:-1, 1]
        return z

    def unpack(self, z, bc: PlanarBoundary) -> tuple[np.ndarray, np.ndarray]:
        n = self.model.n_segments
        q = np.empty((n + 1, 2))
        q[0] = bc.p1
        q[-1] = bc.p2
        q[1:-1, 0] = z[self.x_idx]
        q[1:-1, 1] = z[self.y_idx]
        return q, z[self.tau_idx]

    # -- physics ---------------------------------------------------------

    def node_loads(self, q, env) -> np.ndarray:
        """External loads lumped on every node, endpoints included."""
        loads = np.zeros_like(q)
        for p in self.providers:
            f = p.forces(q, self.model, env)
            if p.kind is ForceKind.NODE:
                loads += f
            else:
                loads[:-1] += 0.5 * f
                loads[1:] += 0.5 * f
        return loads

    def _geometry(self, q):
        d = np.diff(q, axis=0)
        seg = np.hypot(d[:, 0], d[:, 1])
        return d, seg

    def residual_from_q(self, q, tau, env) -> np.ndarray:
        d, seg = self._geometry(q)
        if np.min(seg) < MIN_SEGMENT:
            raise ZeroLengthSegment("segment length collapsed to zero")
        e = d / seg[:, None]
        tv = (tau * tau)[:, None] * e
        bal = tv[1:] - tv[:-1] + self.node_loads(q, env)[1:-1]
        r = np.empty(self.model.n_unknowns)
        r[self.tau_idx] = seg - self.model.segment_length
        r[self.x_idx] = bal[:, 0]
        r[self.y_idx] = bal[:, 1]
        return r

    def _node_base(self, i):
        # packed index of x_i for interior nodes, -1 for endpoints
        n = self.model.n_segments
        i = np.asarray(i)
        return np.where((i >= 1) & (i <= n - 1), 3 * (i - 1) + 1, -1)

    def _block_index(self, r_nodes, c_nodes):
        """Cached (keep-mask, rows, cols) for a family of 2x2 blocks."""
        key = (r_nodes, c_nodes)
        hit = self._block_cache.get(key)
        if hit is None:
            n = self.model.n_segments
            offsets = {"k": 0, "k+1": 1, "all": 0}
            count = n + 1 if r_nodes == "all" else n
            base = np.arange(count)
            rb = self._node_base(base + offsets[r_nodes])
            cb = self._node_base(base + offsets[c_nodes])
            keep = (rb >= 0) & (cb >= 0)
            rb, cb = rb[keep], cb[keep]
            rr = np.broadcast_to(rb[:, None, None] + np.array([0, 1])[None, :, None], (rb.size, 2, 2))
            cc = np.broadcast_to(cb[:, None, None] + np.array([0, 1])[None, None, :], (cb.size, 2, 2))
            hit = (keep, rr.ravel(), cc.ravel())
            self._block_cache[key] = hit
        return hit

    def _static_index(self):
        """Row/column indices of the length and tension-column entries."""
        if self._static is None:
            n = self.model.n_segments
            k = np.arange(n)
            rows, cols, sel = [], [], []
            # length rows: d|q_{k+1} - q_k| / dq = -/+ e_k
            for node, sign in ((k, -1.0), (k + 1, 1.0)):
                cb = self._node_base(node)
                keep = cb >= 0
                for c in range(2):
                    rows.append(3 * k[keep])
                    cols.append(cb[keep] + c)
                    sel.append((keep, c, sign, 0))
            # segment k pulls node k along +e_k and node k+1 along -e_k
            for node, sign in ((k + 1, -1.0), (k, 1.0)):
                rb = self._node_base(node)
                keep = rb >= 0
                for f in range(2):
                    rows.append(rb[keep] + f)
                    cols.append(3 * k[keep])
                    sel.append((keep, f, sign, 1))
            self._static = (np.concatenate(rows), np.concatenate(cols), sel)
        return self._static

    def jacobian_triplets(self, q, tau, env):
        """Analytic Jacobian as ``(rows, cols, values)`` in the packed layout."""
        d, seg = self._geometry(q)
        e = d / seg[:, None]
        proj = (np.eye(2)[None] - e[:, :, None] * e[:, None, :]) / seg[:, None, None]
        tension = tau * tau

        srows, scols, sel = self._static_index()
        rows, cols = [srows], [scols]
        svals = []
        for keep, c, sign, kind in sel:
            if kind == 0:
                svals.append(sign * e[keep, c])
            else:
                svals.append(sign * 2.0 * tau[keep] * e[keep, c])
        vals = [np.concatenate(svals)]

        def add_block(r_nodes, c_nodes, blocks):
            keep, rr, cc = self._block_index(r_nodes, c_nodes)
            rows.append(rr)
            cols.append(cc)
            vals.append(blocks[keep].ravel())

        tp = tension[:, None, None] * proj
        add_block("k", "k+1", tp)
        add_block("k", "k", -tp)
        add_block("k+1", "k+1", -tp)
        add_block("k+1", "k", tp)

        for p in self.providers:
            jac = p.jacobian(q, self.model, env)
            if p.kind is ForceKind.NODE:
                if np.any(jac):
                    add_block("all", "all", jac)
            elif np.any(jac):
                half = 0.5 * jac
                for end, c_node in ((0, "k"), (1, "k+1")):
                    add_block("k", c_node, half[:, end])
                    add_block("k+1", c_node, half[:, end])

        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def banded_jacobian(self, q, tau, env) -> np.ndarray:
        rows, cols, vals = self.jacobian_triplets(q, tau, env)
        ab = np.zeros((2 * BANDWIDTH + 1, self.model.n_unknowns))
        flat = (BANDWIDTH + rows - cols) * self.model.n_unknowns + cols
        ab.ravel()[:] = np.bincount(flat, weights=vals, minlength=ab.size)
        return ab

    def dense_jacobian(self, q, tau, env) -> np.ndarray:
        rows, cols, vals = self.jacobian_triplets(q, tau, env)
        jac = np.zeros((self.model.n_unknowns,) * 2)
        np.add.at(jac, (rows, cols), vals)
        return jac

    def problem(self, bc: PlanarBoundary, env: Environment, dense: bool = False) -> RootProblem:
        def residual(z):
            q, tau = self.unpack(z, bc)
            try:
                return self.residual_from_q(q, tau, env)
            except ZeroLengthSegment:
                return np.full(z.size, np.inf)

        def jacobian(z):
            q, tau = self.unpack(z, bc)
            if dense:
                return self.dense_jacobian(q, tau, env)
            return self.banded_jacobian(q, tau, env)

        if dense:
            return RootProblem(residual, jacobian, self.model.n_unknowns)
        return RootProblem(residual, jacobian, self.model.n_unknowns, _banded_solve, _banded_to_dense)

    # -- solve -----------------------------------------------------------

    def solve(self, bc: PlanarBoundary, env: Environment, init: LumpedState,
              init_strategy: str = "custom") -> tuple[TetherSolution, LumpedState]:
        """Solve for equilibrium starting from ``init``.

        Raises
        ------
        Unreachable, DimensionMismatch, ZeroLengthSegment
        MaxIterations, Diverged, SingularJacobian
            Newton failure (tensions stayed positive).
        NonPhysical
            Newton failed while driving at least one tension to zero.
        """
        model = self.model
        bc.check_reachable(model.spec.length)
        if init.n_segments != model.n_segments or init.positions.shape != (model.n_segments + 1, 2):
            raise DimensionMismatch(
                f"initial state has {init.n_segments} segments, model has {model.n_segments}"
            )
        state0 = init.copy()
        state0.positions[0] = bc.p1
        state0.positions[-1] = bc.p2
        # validates the initial state (zero-length segments raise here)
        self.residual_from_q(state0.positions, np.sqrt(np.abs(state0.tensions)), env)

        problem = self.problem(bc, env)
        t0 = time.perf_counter()
        try:
            result = solve_root(problem, self.pack(state0), self.options)
        except RootFindingError as exc:
            raise self._classify_failure(exc) from exc
        elapsed = time.perf_counter() - t0

        q, tau = self.unpack(result.x, bc)
        state = LumpedState(q, tau * tau)
        diag = SolveDiagnostics(
            iterations=result.iterations,
            residual_norm=result.residual_norm,
            solve_time=elapsed,
            init_strategy=init_strategy,
        )
        return self.to_solution(state, env, diag), state

    def _classify_failure(self, exc: RootFindingError):
        if exc.x is not None and np.min(exc.x[self.tau_idx] ** 2) <= 1e-9 * self.model.spec.weight:
            return NonPhysical(f"equilibrium requires compression ({exc})")
        return exc

    def to_solution(self, state: LumpedState, env: Environment, diag: SolveDiagnostics) -> TetherSolution:
        q, tension = state.positions, state.tensions
        d, seg = self._geometry(q)
        e = d / seg[:, None]
        loads = self.node_loads(q, env)
        start = tension[0] * e[0] + loads[0]
        end = -tension[-1] * e[-1] + loads[-1]
        node_t = np.empty(q.shape[0])
        node_t[1:-1] = 0.5 * (tension[1:] + tension[:-1])
        node_t[0] = math.hypot(*start)
        node_t[-1] = math.hypot(*end)
        return TetherSolution(
            arc=np.arange(q.shape[0]) * self.model.segment_length,
            points=q.copy(),
            tension=node_t,
            start_force=start,
            end_force=end,
            method=Method.NUMERICAL,
            diagnostics=diag,
            params=state,
        )

    def total_loads(self, state: LumpedState, env: Environment) -> np.ndarray:
        """Sum of all external loads on the tether (gravity, drag, inertia, ...)."""
        return self.node_loads(state.positions, env).sum(axis=0)


def _banded_solve(ab, rhs):
    return solve_banded((BANDWIDTH, BANDWIDTH), ab, rhs, check_finite=False)


def _banded_to_dense(ab) -> np.ndarray:
    n = ab.shape[1]
    dense = np.zeros((n, n))
    for offset in range(-BANDWIDTH, BANDWIDTH + 1):
        diag = ab[BANDWIDTH - offset, max(offset, 0): n + min(offset, 0)]
        dense += np.diag(diag, offset)
    return dense


def assemble_residuals(state: LumpedState, model: LumpedModel, env: Environment,
                       providers: list[ForceProvider] | None = None) -> np.ndarray:
    """Residual vector in the packed layout: length rows at ``3k``, node balances in between."""
    solver = EquilibriumSolver(model, providers)
    return solver.residual_from_q(state.positions, np.sqrt(state.tensions), env)


def solve_equilibrium(model: LumpedModel, bc: PlanarBoundary, env: Environment, init: LumpedState,
                      tol: float = 1e-8, providers: list[ForceProvider] | None = None,
                      init_strategy: str = "custom") -> TetherSolution:
    solver = EquilibriumSolver(model, providers, RootOptions(tol=tol, max_iters=100, lm_fallback=True))
    return solver.solve(bc, env, init, init_strategy)[0]


# -- initialisation ---------------------------------------------------------

def init_from_analytical(analytical: TetherSolution, model: LumpedModel) -> LumpedState:
    """Nodes at equal arc spacing on the analytical curve, tensions at segment midpoints."""
    n, seg = model.n_segments, model.segment_length
    positions, _ = analytical.sample_at(np.arange(n + 1) * seg)
    _, tensions = analytical.sample_at((np.arange(n) + 0.5) * seg)
    positions[0] = analytical.points[0]
    positions[-1] = analytical.points[-1]
    return LumpedState(positions, np.asarray(tensions, dtype=float))


def warm_start(previous: LumpedState, bc: PlanarBoundary, n_segments: int | None = None) -> LumpedState:
    if n_segments is not None and previous.n_segments != n_segments:
        raise DimensionMismatch(
            f"previous state has {previous.n_segments} segments, expected {n_segments}"
        )
    state = previous.copy()
    state.positions[0] = bc.p1
    state.positions[-1] = bc.p2
    return state


def straight_line_init(bc: PlanarBoundary, model: LumpedModel) -> LumpedState:
    t = np.linspace(0.0, 1.0, model.n_segments + 1)[:, None]
    p1, p2 = np.array(bc.p1), np.array(bc.p2)
    positions = p1 + t * (p2 - p1)
    tensions = np.full(model.n_segments, model.spec.weight)
    return LumpedState(positions, tensions)


def rotated_span(bc: PlanarBoundary, spec: TetherSpec, extra_load=None) -> float:
    """Horizontal end-point distance in the frame where gravity plus uniform drag points down.

    The drag is estimated from the end-point height difference. ``extra_load``
    adds a constant per-length load to the field.
    """
    load = drag_load(spec, bc.airspeed, bc.dy)
    if extra_load is not None:
        load = load + np.asarray(extra_load, dtype=float)
    return bc.rotated(_field_angle(load)).dx


def should_fallback(bc: PlanarBoundary, spec: TetherSpec, env: Environment | None = None,
                    n_segments: int = DEFAULT_SEGMENTS, extra_load=None) -> bool:
    """True when the discretization cannot resolve the bend at the bottom of the tether."""
    if env is not None and env.airspeed != bc.airspeed:
        bc = PlanarBoundary(bc.p1, bc.p2, env.airspeed)
    return rotated_span(bc, spec, extra_load) < 2.0 * spec.length / n_segments

"""Analytical catenary solver with a uniform-drag extension.

The cable hangs on ``y = a*cosh((x - x0)/a) + y0``. Three constraints fix the
parameters: both end points lie on the curve and the arc length between them
equals the tether length. Uniform drag is handled by treating it as a constant
load field added to gravity: the resulting curve is still a catenary, in a
frame rotated so that the combined field points straight down.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    Method,
    PlanarBoundary,
    SolveDiagnostics,
    TetherSolution,
    TetherSpec,
    rotate,
    signed_drag,
    weight_per_length,
)
from .errors import (
    AllGuessesFailed,
    DragIterationDiverged,
    IllPosed,
    InputError,
    RootFindingError,
)
from scipy.optimize import brentq

from .rootfind import RootOptions, RootProblem, solve_root

# horizontal span (relative to L) below which the catenary system is ill-posed
ILL_POSED_SPAN = 1e-3
MAX_NEWTON_ITERS = 25
DEFAULT_SAMPLES = 101

GUESS_ORDER = (
    "Parabolic 2x",
    "Parabolic 1.2x",
    "Large Sag",
    "No Sag 1x",
    "No Sag 2x",
    "Parabolic 0.8x",
    "Parabolic 1x",
)


@dataclass(frozen=True)
class CatenaryParams:
    """Catenary parameters, expressed in the (possibly rotated) solve frame.

    ``frame_rotation`` is the angle of the solve frame relative to the world
    frame; world = rotate(solve, frame_rotation). ``effective_w`` is the load
    per unit length along the solve frame's ``-y`` axis; ``None`` means
    "use the tether weight".
    """

    a: float
    x0: float
    y0: float
    frame_rotation: float = 0.0
    effective_w: Optional[float] = None
    diagnostics: Optional[SolveDiagnostics] = field(default=None, compare=False, repr=False)

    @property
    def vertex(self):
        return (self.x0, self.y0 + self.a)

    def horizontal_tension(self, spec: TetherSpec | None = None) -> float:
        return self.a * _load(self, spec)


class Guess(NamedTuple):
    label: str
    a: float
    x0: float
    y0: float


def _load(params: CatenaryParams, spec: TetherSpec | None) -> float:
    if params.effective_w is not None:
        return params.effective_w
    if spec is None:
        raise InputError("effective_w is unset; a TetherSpec is required")
    return weight_per_length(spec)


def eval_catenary(params: CatenaryParams, x):
    return params.a * np.cosh((np.asarray(x, dtype=float) - params.x0) / params.a) + params.y0


def arc_length(params: CatenaryParams, xa, xb):
    a, x0 = params.a, params.x0
    return a * np.abs(np.sinh((xb - x0) / a) - np.sinh((xa - x0) / a))


def _residuals(v, x1, y1, x2, y2, length):
    a, x0, y0 = v
    if not a > 0:
        return np.full(3, np.inf)
    u1 = (x1 - x0) / a
    u2 = (x2 - x0) / a
    try:
        return np.array([
            a * math.cosh(u1) + y0 - y1,
            a * math.cosh(u2) + y0 - y2,
            a * abs(math.sinh(u2) - math.sinh(u1)) - length,
        ])
    except OverflowError:
        return np.full(3, np.inf)


def _jacobian(v, x1, y1, x2, y2, length):
    a, x0, _ = v
    u1 = (x1 - x0) / a
    u2 = (x2 - x0) / a
    c1, s1 = math.cosh(u1), math.sinh(u1)
    c2, s2 = math.cosh(u2), math.sinh(u2)
    sign = 1.0 if s2 >= s1 else -1.0
    return np.array([
        [c1 - u1 * s1, -s1, 1.0],
        [c2 - u2 * s2, -s2, 1.0],
        [sign * ((s2 - u2 * c2) - (s1 - u1 * c1)), sign * (c1 - c2), 0.0],
    ])


def _solve3(jac, rhs):
    # Cramer's rule: np.linalg.solve costs more in call overhead than the solve itself
    (a, b, c), (d, e, f), (g, h, i) = jac.tolist()
    r0, r1, r2 = rhs.tolist()
    co0, co1, co2 = e * i - f * h, f * g - d * i, d * h - e * g
    det = a * co0 + b * co1 + c * co2
    if det == 0.0 or not math.isfinite(det):
        raise np.linalg.LinAlgError("singular catenary Jacobian")
    x = (r0 * co0 + b * (r2 * f - r1 * i) + c * (r1 * h - r2 * e)) / det
    y = (a * (r1 * i - r2 * f) + r0 * co1 + c * (r2 * d - r1 * g)) / det
    z = (a * (e * r2 - h * r1) + b * (g * r1 - d * r2) + r0 * co2) / det
    return np.array([x, y, z])


def catenary_problem(bc: PlanarBoundary, length: float) -> RootProblem:
    """The three endpoint/arc-length constraints as a root problem in (a, x0, y0)."""
    (x1, y1), (x2, y2) = bc.p1, bc.p2
    args = (x1, y1, x2, y2, length)
    return RootProblem(
        residual=lambda v: _residuals(v, *args),
        jacobian=lambda v: _jacobian(v, *args),
        n=3,
        linsolve=_solve3,
    )


def constraint_residuals(params: CatenaryParams, bc: PlanarBoundary, length: float) -> np.ndarray:
    """Residuals ``(r1, r2, r3)`` of the endpoint and arc-length constraints.

    ``bc`` must be given in the params' frame.
    """
    (x1, y1), (x2, y2) = bc.p1, bc.p2
    return _residuals((params.a, params.x0, params.y0), x1, y1, x2, y2, length)


def parabolic_sag_estimate(bc: PlanarBoundary, length: float):
    """Sag and shape parameter from the parabolic cable-length approximation.

    Returns ``(s_par, a_par)``. For a taut span (``d_x == L``) the sag is zero
    and ``a_par`` is ``inf``.
    """
    dx = bc.dx
    if not 0 < dx <= length:
        raise InputError(f"parabolic estimate needs 0 < d_x <= L, got d_x={dx!r}, L={length!r}")
    s_par = math.sqrt(3.0 / 8.0 * dx * (length - dx))
    a_par = dx * dx / (8.0 * s_par) if s_par > 0 else math.inf
    return s_par, a_par


def build_guesses(bc: PlanarBoundary, length: float) -> list[Guess]:
    """Initial guesses in the order they are tried.

    The lower end point plays the role of ``p1`` in the formulas.
    """
    if bc.p1[1] > bc.p2[1]:
        bc = bc.swapped()
    (x1, y1), (x2, _) = bc.p1, bc.p2
    x_mid = 0.5 * (x1 + x2)
    dx = bc.dx
    s_par, a_par = parabolic_sag_estimate(bc, length)
    a_nosag = dx * dx / (8.0 * max(s_par, 0.01 * dx))

    rows = {"Large Sag": Guess("Large Sag", length / 8.0, x_mid, y1 - length / 2.0)}
    if math.isfinite(a_par):
        for k, tag in ((2.0, "2x"), (1.2, "1.2x"), (0.8, "0.8x"), (1.0, "1x")):
            rows[f"Parabolic {tag}"] = Guess(f"Parabolic {tag}", k * a_par, x_mid, y1 - s_par - k * a_par)
    for k, tag in ((1.0, "1x"), (2.0, "2x")):
        rows[f"No Sag {tag}"] = Guess(f"No Sag {tag}", k * a_nosag, x_mid, y1 - k * a_nosag)
    out = [rows[label] for label in GUESS_ORDER if label in rows]
    reduced = reduced_guess(bc, length)
    if reduced is not None:
        out.append(reduced)
    return out


REDUCED_LABEL = "Reduced"


def reduced_guess(bc: PlanarBoundary, length: float) -> Guess | None:
    """Last-resort guess from the one-dimensional reduction of the system.

    Eliminating ``x0`` and ``y0`` leaves ``sinh(z)/z = sqrt(L^2 - dy^2)/dx``
    with ``z = dx/(2a)``, which is bracketed and solved directly. The tabulated
    guesses miss very slack, steep spans where ``a`` is tiny; this one does
    not. Returns ``None`` for a taut span.
    """
    (x1, y1), (x2, y2) = bc.p1, bc.p2
    dx, dy = abs(x2 - x1), y2 - y1
    if dx == 0.0 or abs(dy) >= length:
        return None
    ratio = math.sqrt(length * length - dy * dy) / dx
    if not ratio > 1.0 + 1e-12:
        return None
    f = lambda z: math.log(math.sinh(z) / z) - math.log(ratio)
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    z = brentq(f, 1e-9, hi, xtol=1e-14)
    a = dx / (2.0 * z)
    x0 = 0.5 * (x1 + x2) - math.copysign(a, x2 - x1) * math.atanh(dy / length)
    try:
        y0 = y1 - a * math.cosh((x1 - x0) / a)
    except OverflowError:
        return None
    return Guess(REDUCED_LABEL, a, x0, y0)


def solve_catenary(
    bc: PlanarBoundary,
    length: float,
    tol: float = 1e-8,
    guesses: Sequence[Guess] | None = None,
    effective_w: float | None = None,
    frame_rotation: float = 0.0,
) -> CatenaryParams:
    """Fit a catenary through ``bc`` with arc length ``length``.

    Guesses are tried in order; each Newton run aborts early on divergence and
    the first success wins. The returned params carry diagnostics naming the
    successful guess.

    Raises
    ------
    Unreachable
        The end points are further apart than ``length``.
    IllPosed
        The horizontal span is below ``1e-3 * length``.
    AllGuessesFailed
    """
    t0 = time.perf_counter()
    bc.check_reachable(length)
    if bc.dx < ILL_POSED_SPAN * length:
        raise IllPosed(f"horizontal span {bc.dx:.3g} m is too small for a catenary fit")
    if guesses is None:
        guesses = build_guesses(bc, length)

    problem = catenary_problem(bc, length)
    options = RootOptions(tol=tol, max_iters=MAX_NEWTON_ITERS)
    iterations = 0
    tried = []
    for guess in guesses:
        tried.append(guess.label)
        try:
            result = solve_root(problem, (guess.a, guess.x0, guess.y0), options)
        except RootFindingError as exc:
            iterations += exc.iterations
            continue
        iterations += result.iterations
        v, norm = _polish(problem, result.x, result.residual_norm)
        diag = SolveDiagnostics(
            iterations=iterations,
            residual_norm=norm,
            solve_time=time.perf_counter() - t0,
            guess_used=guess.label,
            extra={"guesses_tried": tried},
        )
        return CatenaryParams(v[0], v[1], v[2], frame_rotation, effective_w, diag)
    raise AllGuessesFailed(f"no guess converged for p1={bc.p1}, p2={bc.p2}, L={length}")


def _polish(problem, v, norm):
    """One extra Newton step; kept only if it lowers the residual."""
    try:
        step = problem.linsolve(problem.jacobian(v), -problem.residual(v))
    except np.linalg.LinAlgError:
        return v, norm
    v2 = v + step
    r2 = problem.residual(v2)
    n2 = float(np.max(np.abs(r2)))
    return (v2, n2) if n2 < norm else (v, norm)


def _direction(params: CatenaryParams, bc: PlanarBoundary) -> float:
    return 1.0 if bc.p2[0] >= bc.p1[0] else -1.0


def sample_equal_arc(params: CatenaryParams, bc: PlanarBoundary, length: float, n: int) -> np.ndarray:
    """``n`` points at equal arc spacing from ``p1`` to ``p2`` (solve frame)."""
    if n < 2:
        raise InputError("need at least two samples")
    (x1, _), (x2, _) = bc.p1, bc.p2
    total = arc_length(params, x1, x2)
    pts = _points_at_arc(params, bc, np.linspace(0.0, total, n))
    pts[0] = bc.p1
    pts[-1] = bc.p2
    return pts


def _points_at_arc(params: CatenaryParams, bc: PlanarBoundary, s) -> np.ndarray:
    a, x0 = params.a, params.x0
    sigma = _direction(params, bc)
    s1 = math.sinh((bc.p1[0] - x0) / a)
    x = x0 + a * np.arcsinh(s1 + sigma * np.asarray(s, dtype=float) / a)
    return np.column_stack([x, eval_catenary(params, x)])


def tension_profile(params: CatenaryParams, spec: TetherSpec | None, points) -> np.ndarray:
    """Tension at ``points`` (solve frame): load per length times height above the directrix."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return _load(params, spec) * (pts[:, 1] - params.y0)


def endpoint_forces(params: CatenaryParams, spec: TetherSpec | None, bc: PlanarBoundary):
    """Forces the tether exerts on ``p1`` and ``p2``, in the solve frame."""
    w = _load(params, spec)
    sigma = _direction(params, bc)
    forces = []
    for (x, _), sgn in ((bc.p1, 1.0), (bc.p2, -1.0)):
        u = (x - params.x0) / params.a
        # tension along the unit tangent (sigma, sigma*sinh u)/cosh u, magnitude w*a*cosh u
        forces.append(sgn * sigma * w * params.a * np.array([1.0, math.sinh(u)]))
    return forces[0], forces[1]


def vertical_extent(params: CatenaryParams, bc: PlanarBoundary) -> float:
    """Total variation of world-frame height along the curve.

    Sag below an end point counts twice. ``bc`` is in the solve frame.
    """
    th = params.frame_rotation
    a, x0 = params.a, params.x0
    (x1, _), (x2, _) = bc.p1, bc.p2

    def world_y(x):
        return math.sin(th) * x + math.cos(th) * float(eval_catenary(params, x))

    y1, y2 = world_y(x1), world_y(x2)
    # world-horizontal tangent: sin th + cos th * sinh(u) = 0
    x_turn = x0 + a * math.asinh(-math.tan(th))
    lo, hi = min(x1, x2), max(x1, x2)
    if lo < x_turn < hi:
        yt = world_y(x_turn)
        return abs(y1 - yt) + abs(y2 - yt)
    return abs(y2 - y1)


def _field_angle(load) -> float:
    fx, fy = load
    return math.atan2(fx, -fy)


class _FieldFit(NamedTuple):
    rbc: PlanarBoundary
    theta: float
    w_eff: float
    params: Optional[CatenaryParams]  # None for the vertical-hang case


def _fit_in_field(bc, length, load, tol, guesses) -> _FieldFit:
    theta = _field_angle(load)
    w_eff = math.hypot(*load)
    rbc = bc.rotated(theta)
    if rbc.dx < ILL_POSED_SPAN * length:
        return _FieldFit(rbc, theta, w_eff, None)
    params = solve_catenary(rbc, length, tol, guesses, effective_w=w_eff, frame_rotation=theta)
    return _FieldFit(rbc, theta, w_eff, params)


def _fit_extent(fit: _FieldFit, length) -> float:
    if fit.params is not None:
        return vertical_extent(fit.params, fit.rbc)
    (x1, y1), (x2, y2) = fit.rbc.p1, fit.rbc.p2
    y_fold = _fold_height(fit.rbc, length)
    x_fold = x1 + (x2 - x1) * (y1 - y_fold) / length
    corners = rotate(np.array([[x1, y1], [x_fold, y_fold], [x2, y2]]), fit.theta)
    return float(np.sum(np.abs(np.diff(corners[:, 1]))))


def _fit_solution(fit: _FieldFit, length, n_samples) -> TetherSolution:
    rbc, theta = fit.rbc, fit.theta
    if fit.params is None:
        return _vertical_hang(rbc, length, fit.w_eff, theta, n_samples)
    params = fit.params
    s_total = arc_length(params, rbc.p1[0], rbc.p2[0])

    def sampler(s):
        s = np.asarray(s, dtype=float) * (s_total / length)
        pts = _points_at_arc(params, rbc, s)
        return rotate(pts, theta), tension_profile(params, None, pts)

    pts = sample_equal_arc(params, rbc, length, n_samples)
    f1, f2 = endpoint_forces(params, None, rbc)
    return TetherSolution(
        arc=np.linspace(0.0, length, n_samples),
        points=rotate(pts, theta),
        tension=tension_profile(params, None, pts),
        start_force=rotate(f1, theta),
        end_force=rotate(f2, theta),
        method=Method.ANALYTICAL,
        diagnostics=replace(params.diagnostics),
        params=params,
        sampler=sampler,
    )


def solve_in_field(
    bc: PlanarBoundary,
    length: float,
    load,
    tol: float = 1e-8,
    n_samples: int = DEFAULT_SAMPLES,
    guesses: Sequence[Guess] | None = None,
) -> TetherSolution:
    """Shape and tension of a tether under a uniform load field.

    ``load`` is the (x, y) force per unit length acting on the tether in the
    world frame. Falls back to an exact doubled vertical line when the span in
    the rotated frame is too narrow for a catenary fit.
    """
    t0 = time.perf_counter()
    bc.check_reachable(length)
    sol = _fit_solution(_fit_in_field(bc, length, load, tol, guesses), length, n_samples)
    sol.diagnostics.solve_time = time.perf_counter() - t0
    return sol


def _fold_height(rbc, length):
    (_, y1), (_, y2) = rbc.p1, rbc.p2
    return min(y1, y2) - 0.5 * (length - abs(y2 - y1))


def _vertical_hang(rbc: PlanarBoundary, length, w_eff, theta, n_samples) -> TetherSolution:
    (x1, y1), (x2, y2) = rbc.p1, rbc.p2
    y_fold = _fold_height(rbc, length)
    s_fold = y1 - y_fold

    def sampler(s):
        s = np.asarray(s, dtype=float)
        y = np.where(s <= s_fold, y1 - s, y_fold + (s - s_fold))
        x = x1 + (x2 - x1) * s / length
        pts = np.column_stack([x, y])
        return rotate(pts, theta), w_eff * (y - y_fold)

    arc = np.linspace(0.0, length, n_samples)
    pts, tension = sampler(arc)
    pts[0], pts[-1] = rotate(rbc.p1, theta), rotate(rbc.p2, theta)
    t1, t2 = w_eff * (y1 - y_fold), w_eff * (y2 - y_fold)
    return TetherSolution(
        arc=arc,
        points=pts,
        tension=tension,
        start_force=rotate((0.0, -t1), theta),
        end_force=rotate((0.0, -t2), theta),
        method=Method.ANALYTICAL,
        diagnostics=SolveDiagnostics(guess_used="vertical hang"),
        params=None,
        sampler=sampler,
    )


def drag_load(spec: TetherSpec, airspeed: float, vertical_length: float) -> np.ndarray:
    """Uniform load field [N/m]: gravity plus the total drag spread over the length."""
    drag = signed_drag(spec, spec.diameter * vertical_length, airspeed)
    return np.array([drag / spec.length, -weight_per_length(spec)])


def solve_with_drag(
    bc: PlanarBoundary,
    spec: TetherSpec,
    tol: float = 1e-8,
    n_samples: int = DEFAULT_SAMPLES,
    max_iters: int = 20,
    draglen_tol: float | None = None,
    extra_load=None,
) -> TetherSolution:
    """Analytical solution including uniform aerodynamic drag.

    The exposed area depends on the vertical extent of the tether, which
    depends on the solution. Starting from the end-point height difference,
    the extent is re-estimated from each solved curve until it changes by less
    than ``draglen_tol`` (default ``1e-4 * L``).

    ``extra_load`` is an optional constant per-length load [N/m] added to the
    field, e.g. the inertial load ``-mu * a`` of a tether accelerating with the
    drone.

    Raises
    ------
    DragIterationDiverged
        The vertical extent did not settle within ``max_iters`` solves.
    """
    t0 = time.perf_counter()
    length = spec.length
    bc.check_reachable(length)
    if draglen_tol is None:
        draglen_tol = 1e-4 * length
    windless = bc.airspeed == 0.0 or spec.drag_coefficient == 0.0
    extra = np.zeros(2) if extra_load is None else np.asarray(extra_load, dtype=float)

    extent = bc.dy
    iterations = 0
    guesses = None
    first_guess = None
    for k in range(1, max_iters + 1):
        load = drag_load(spec, 0.0 if windless else bc.airspeed, extent) + extra
        fit = _fit_in_field(bc, length, load, tol, guesses)
        if fit.params is not None:
            iterations += fit.params.diagnostics.iterations
            if first_guess is None:
                first_guess = fit.params.diagnostics.guess_used
        if windless:
            break
        actual = _fit_extent(fit, length)
        if abs(actual - extent) < draglen_tol:
            break
        extent = actual
        guesses = _carry_over(fit.params, bc, length, drag_load(spec, bc.airspeed, extent) + extra)
    else:
        raise DragIterationDiverged(
            f"vertical extent did not converge within {max_iters} drag iterations"
        )

    sol = _fit_solution(fit, length, n_samples)
    diag = sol.diagnostics
    diag.iterations = iterations
    diag.drag_iterations = k
    diag.extra = dict(diag.extra, first_guess=first_guess or diag.guess_used, vertical_extent=extent,
                      load=tuple(float(f) for f in load))
    diag.solve_time = time.perf_counter() - t0
    return sol


def _carry_over(params, bc, length, load):
    """Previous solution's vertex mapped into the next frame, ahead of the standard guesses."""
    theta = _field_angle(load)
    rbc = bc.rotated(theta)
    if rbc.dx < ILL_POSED_SPAN * length:
        return None
    standard = build_guesses(rbc, length)
    if params is None:
        return standard
    p = params
    vertex = rotate(rotate(p.vertex, p.frame_rotation), -theta)
    return [Guess("Previous", p.a, vertex[0], vertex[1] - p.a)] + standard

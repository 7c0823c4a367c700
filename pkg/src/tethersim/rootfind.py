"""Damped Newton root finder shared by the analytical and lumped-mass solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import Diverged, MaxIterations, SingularJacobian


@dataclass(frozen=True)
class RootOptions:
    tol: float = 1e-8
    max_iters: int = 50
    early_abort_growth_steps: int = 3
    backtrack: float = 0.5
    min_step: float = 1e-6
    armijo: float = 1e-4
    # Levenberg-Marquardt step when the Newton step is singular or rejected
    lm_fallback: bool = False
    lm_max_tries: int = 30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class RootProblem:
    """A square nonlinear system ``residual(x) = 0``.

    ``jacobian`` may return any object that ``linsolve(J, r)`` understands;
    the default is a dense matrix solved with LAPACK. A residual that returns
    non-finite values marks ``x`` as infeasible and makes the line search
    back off.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], object]
    n: int
    linsolve: Optional[Callable[[object, np.ndarray], np.ndarray]] = None
    to_dense: Optional[Callable[[object], np.ndarray]] = None


@dataclass
class RootResult:
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int
    evaluations: int


def _dense_solve(jac, rhs):
    return np.linalg.solve(jac, rhs)


def solve_root(problem: RootProblem, guess, options: RootOptions = RootOptions()) -> RootResult:
    """Solve ``problem`` from ``guess`` with a backtracking Newton iteration.

    Convergence is declared when the infinity norm of the residual is at most
    ``options.tol``. The merit function for the line search is the squared
    2-norm of the residual. When the line search bottoms out at
    ``min_step`` the step is taken anyway; if that makes the residual grow for
    ``early_abort_growth_steps`` consecutive iterations the solve is abandoned
    with :class:`Diverged`.

    Raises
    ------
    SingularJacobian, Diverged, MaxIterations
    """
    linsolve = problem.linsolve or _dense_solve
    x = np.array(guess, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"guess has shape {x.shape}, expected ({problem.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("guess must be finite")

    r = np.asarray(problem.residual(x), dtype=float)
    evaluations = 1
    norm = np.max(np.abs(r)) if np.all(np.isfinite(r)) else np.inf
    if not np.isfinite(norm):
        raise Diverged("residual is not finite at the initial guess", 0, norm, x)
    with np.errstate(over="ignore"):
        merit = r @ r  # may overflow to inf for wild guesses; any finite trial then improves
    growth = 0
    lm = _Marquardt(problem, options)

    for it in range(options.max_iters + 1):
        if norm <= options.tol:
            return RootResult(x, r, float(norm), it, evaluations)
        if it == options.max_iters:
            break
        jac = problem.jacobian(x)
        try:
            with np.errstate(all="ignore"):
                dx = linsolve(jac, -r)
            if not np.all(np.isfinite(dx)):
                raise np.linalg.LinAlgError("Newton step is not finite")
        except (np.linalg.LinAlgError, ValueError) as exc:
            if not options.lm_fallback:
                raise SingularJacobian(str(exc), it, float(norm), x) from exc
            dx = None

        accepted = None
        if dx is not None:
            step = 1.0
            while True:
                x_new = x + step * dx
                evaluations += 1
                r_new, merit_new = _evaluate(problem, x_new)
                if merit_new <= (1.0 - options.armijo * step) * merit:
                    accepted = (x_new, r_new, merit_new)
                    break
                if step * options.backtrack < options.min_step:
                    break
                step *= options.backtrack

        if accepted is None and options.lm_fallback:
            accepted, n_eval = lm.step(x, r, merit, jac)
            evaluations += n_eval
        if accepted is None:
            if dx is None:
                raise SingularJacobian("singular Jacobian and no descent step", it, float(norm), x)
            # take the shortest step anyway and let the growth counter decide
            accepted = (x_new, r_new, merit_new)

        x_new, r_new, merit_new = accepted
        if not np.isfinite(merit_new):
            raise Diverged("no finite residual along the Newton direction", it + 1, float(norm), x)
        growth = growth + 1 if merit_new > merit else 0
        x, r, merit = x_new, r_new, merit_new
        norm = np.max(np.abs(r))
        if growth >= options.early_abort_growth_steps:
            raise Diverged(f"residual grew for {growth} consecutive steps", it + 1, float(norm), x)

    raise MaxIterations(f"no convergence after {options.max_iters} iterations", options.max_iters, float(norm), x)


def _evaluate(problem, x):
    with np.errstate(all="ignore"):
        r = np.asarray(problem.residual(x), dtype=float)
        merit = float(r @ r)
    # a finite sum of squares implies finite components
    return r, merit if math.isfinite(merit) else math.inf


class _Marquardt:
    """Damped least-squares steps ``(J^T J + lam D) dx = -J^T r`` with adaptive ``lam``."""

    def __init__(self, problem, options):
        self.problem = problem
        self.options = options
        self.lam = None

    def step(self, x, r, merit, jac):
        dense = self.problem.to_dense(jac) if self.problem.to_dense else np.asarray(jac)
        jtj = dense.T @ dense
        grad = dense.T @ r
        diag = np.maximum(np.diag(jtj), 1e-12 * max(1.0, np.max(np.diag(jtj))))
        if self.lam is None:
            self.lam = 1e-3
        evals = 0
        for _ in range(self.options.lm_max_tries):
            try:
                dx = np.linalg.solve(jtj + self.lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                self.lam *= 10.0
                continue
            x_new = x + dx
            evals += 1
            r_new, merit_new = _evaluate(self.problem, x_new)
            if merit_new < merit:
                self.lam = max(self.lam / 3.0, 1e-12)
                return (x_new, r_new, merit_new), evals
            self.lam *= 4.0
        return None, evals


def finite_difference_jacobian(residual, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, column by column.

    ``residual`` is a callable or a :class:`RootProblem`. ``h`` is a relative
    step: column ``j`` uses ``h * max(1, |x_j|)``.
    """
    if isinstance(residual, RootProblem):
        residual = residual.residual
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    r0 = np.asarray(residual(x), dtype=float)
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        hj = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += hj
        xm[j] -= hj
        jac[:, j] = (np.asarray(residual(xp)) - np.asarray(residual(xm))) / (2.0 * hj)
    return jac

import numpy as np
import pytest

from tethersim.core import Method, TetherSpec
from tethersim.numerical import Environment, EquilibriumSolver, discretize
from tethersim.forces import default_providers


@pytest.fixture
def spec32():
    """The 32 m / 450 g / 3 mm reference tether."""
    return TetherSpec.from_total_mass(32.0, 0.45, 0.003, drag_coefficient=1.2)


def external_load(sol, spec, env=None, inertia=False):
    """Total external load on the tether implied by the solution's own model."""
    if sol.method in (Method.ANALYTICAL, Method.ANALYTICAL_FALLBACK):
        return spec.length * np.asarray(sol.diagnostics.extra["load"])
    state = sol.params
    model = discretize(spec, state.n_segments)
    solver = EquilibriumSolver(model, default_providers(inertia))
    return solver.total_loads(state, env or Environment())


def assert_force_balance(sol, spec, env=None, inertia=False, tol=1e-8):
    """start_force + end_force equals the total external load within 10x tol."""
    residual = sol.start_force + sol.end_force - external_load(sol, spec, env, inertia)
    assert np.max(np.abs(residual)) <= 10 * tol, residual


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

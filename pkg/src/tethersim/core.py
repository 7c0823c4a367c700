"""Domain types, unit conventions and the drag law shared by both solvers.

Everything is SI. The solution plane is vertical: ``x`` is horizontal,
``y`` points up and gravity acts along ``-y``. A positive airspeed means the
air moves towards ``+x``, so drag on the tether points along ``+x``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InputError, Unreachable

GRAVITY = 9.81
AIR_DENSITY = 1.225


@dataclass(frozen=True)
class TetherSpec:
    """Physical tether properties.

    Parameters
    ----------
    length : float
        Unstretched tether length [m].
    linear_mass : float
        Mass per unit length [kg/m].
    diameter : float
        Tether diameter [m], used for the exposed drag area.
    drag_coefficient : float
        Cross-flow drag coefficient [-].
    air_density : float
        [kg/m^3]
    gravity : float
        [m/s^2]
    """

    length: float
    linear_mass: float
    diameter: float
    drag_coefficient: float = 1.2
    air_density: float = AIR_DENSITY
    gravity: float = GRAVITY

    def __post_init__(self):
        checks = {
            "length": self.length > 0,
            "linear_mass": self.linear_mass > 0,
            "diameter": self.diameter > 0,
            "drag_coefficient": self.drag_coefficient >= 0,
            "air_density": self.air_density > 0,
            "gravity": self.gravity > 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not math.isfinite(value):
                raise InputError(f"invalid tether parameter {name}={value!r}")

    @classmethod
    def from_total_mass(cls, length, mass, diameter, **kwargs):
        return cls(length=length, linear_mass=mass / length, diameter=diameter, **kwargs)

    @property
    def total_mass(self):
        return self.linear_mass * self.length

    @property
    def weight(self):
        """Total tether weight [N]."""
        return weight_per_length(self) * self.length


def weight_per_length(spec: TetherSpec) -> float:
    """Weight per unit length ``w = mu * g`` [N/m]."""
    return spec.linear_mass * spec.gravity


def rayleigh_drag(spec: TetherSpec, area: float, airspeed: float) -> float:
    """Drag magnitude ``0.5 * rho * C_D * A * V**2`` [N].

    The result is unsigned; callers orient it along the wind.
    """
    if area < 0:
        raise InputError(f"exposed area must be non-negative, got {area!r}")
    return 0.5 * spec.air_density * spec.drag_coefficient * area * airspeed * airspeed


def signed_drag(spec: TetherSpec, area: float, airspeed: float) -> float:
    """Horizontal drag component, positive along ``+x`` for positive airspeed."""
    return math.copysign(rayleigh_drag(spec, area, airspeed), airspeed) if airspeed else 0.0


@dataclass(frozen=True)
class PlanarBoundary:
    """End points of the tether in the vertical solution plane.

    ``p1`` is the ground vehicle, ``p2`` the drone. ``airspeed`` is the signed
    horizontal wind speed in the plane.
    """

    p1: tuple[float, float]
    p2: tuple[float, float]
    airspeed: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = tuple(float(c) for c in getattr(self, name))
            if len(p) != 2 or not all(math.isfinite(c) for c in p):
                raise InputError(f"{name} must be a finite 2D point, got {getattr(self, name)!r}")
            object.__setattr__(self, name, p)
        if not math.isfinite(self.airspeed):
            raise InputError(f"airspeed must be finite, got {self.airspeed!r}")
        object.__setattr__(self, "airspeed", float(self.airspeed))

    @property
    def chord(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])

    @property
    def dx(self) -> float:
        return abs(self.p2[0] - self.p1[0])

    @property
    def dy(self) -> float:
        return abs(self.p2[1] - self.p1[1])

    def check_reachable(self, length: float) -> None:
        # a tiny relative slack so that exactly-taut inputs are not rejected by round-off
        if self.chord > length * (1.0 + 1e-12):
            raise Unreachable(self.chord, length)

    def swapped(self) -> "PlanarBoundary":
        return PlanarBoundary(self.p2, self.p1, self.airspeed)

    def rotated(self, angle: float) -> "PlanarBoundary":
        """Boundary expressed in a frame rotated by ``-angle`` (as used by the drag trick)."""
        q = rotate(np.array([self.p1, self.p2]), -angle)
        return PlanarBoundary(tuple(q[0]), tuple(q[1]), self.airspeed)


class Method(str, enum.Enum):
    ANALYTICAL = "analytical"
    NUMERICAL = "numerical"
    ANALYTICAL_FALLBACK = "analytical_fallback"
    FAILED = "failed"


@dataclass
class SolveDiagnostics:
    iterations: int = 0
    residual_norm: float = 0.0
    solve_time: float = 0.0
    guess_used: Optional[str] = None
    init_strategy: Optional[str] = None
    drag_iterations: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class TetherSolution:
    """Method-agnostic solver output.

    ``arc``, ``points`` and ``tension`` are parallel sample arrays ordered from
    ``p1`` to ``p2``. ``start_force`` and ``end_force`` are the forces the tether
    exerts on its two attachment points.
    """

    arc: np.ndarray
    points: np.ndarray
    tension: np.ndarray
    start_force: np.ndarray
    end_force: np.ndarray
    method: Method
    diagnostics: SolveDiagnostics
    params: object = None
    # continuous sampler s -> (points, tensions), present for analytical solutions
    sampler: Optional[Callable] = field(default=None, repr=False, compare=False)

    @property
    def start_tension(self) -> float:
        return float(np.hypot(*self.start_force))

    @property
    def end_tension(self) -> float:
        return float(np.hypot(*self.end_force))

    @property
    def samples(self):
        """The samples as ``(s, (x, y), T)`` tuples."""
        return [(float(s), (float(p[0]), float(p[1])), float(t))
                for s, p, t in zip(self.arc, self.points, self.tension)]

    def sample_at(self, s):
        """Points and tensions at arc positions ``s``.

        Uses the exact curve when available, otherwise interpolates linearly
        between samples.
        """
        s = np.asarray(s, dtype=float)
        if self.sampler is not None:
            return self.sampler(s)
        x = np.interp(s, self.arc, self.points[:, 0])
        y = np.interp(s, self.arc, self.points[:, 1])
        return np.column_stack([x, y]), np.interp(s, self.arc, self.tension)


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate(vectors, angle: float) -> np.ndarray:
    """Rotate row vectors counter-clockwise by ``angle``."""
    return np.asarray(vectors, dtype=float) @ rotation_matrix(angle).T

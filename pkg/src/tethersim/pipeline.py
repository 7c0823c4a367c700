"""Flight-log ingestion, reduction to the tether plane, and time-series replay.

Log format (CSV, header required, SI units, empty cells allowed for the
optional columns)::

    t,base_x,base_y,base_z,drone_x,drone_y,drone_z,wind_x,wind_y,wind_z,acc_x,acc_y,acc_z,tension_measured

Positions are local East-North-Up metres. A geodetic variant replaces the six
position columns with ``base_lat,base_lon,base_alt,drone_lat,drone_lon,drone_alt``
(degrees, metres); it is converted about the first base position. ``wind_*``
is the air velocity over ground: drag on the tether points along it. Without
wind columns the drone is assumed to move through still air, so the wind is
the negated drone velocity.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Method, PlanarBoundary, TetherSpec
from .errors import DegenerateGeometry, InputError, TetherError
from .numerical import Environment
from .simulator import TetherSimulator

EARTH_RADIUS = 6378137.0
# below this horizontal separation the plane orientation comes from the wind
MIN_PLANE_SPAN = 1e-6

ENU_COLUMNS = ("base_x", "base_y", "base_z", "drone_x", "drone_y", "drone_z")
GEO_COLUMNS = ("base_lat", "base_lon", "base_alt", "drone_lat", "drone_lon", "drone_alt")
WIND_COLUMNS = ("wind_x", "wind_y", "wind_z")
ACC_COLUMNS = ("acc_x", "acc_y", "acc_z")
LOG_HEADER = ("t",) + ENU_COLUMNS + WIND_COLUMNS + ACC_COLUMNS + ("tension_measured",)


@dataclass
class FlightSample:
    t: float
    base_pos: np.ndarray
    drone_pos: np.ndarray
    airspeed_3d: Optional[np.ndarray] = None
    drone_accel: Optional[np.ndarray] = None
    measured_tension: Optional[float] = None


@dataclass
class FlightLog:
    samples: list[FlightSample]
    origin: Optional[tuple[float, float, float]] = None
    notes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


def geodetic_to_local(lat, lon, alt, origin) -> np.ndarray:
    """Equirectangular East-North-Up coordinates about ``origin = (lat, lon, alt)``.

    Relative error stays well below 0.1% for spans under 2 km at
    non-polar latitudes.
    """
    lat0, lon0, alt0 = origin
    dlat = math.radians(lat - lat0)
    dlon = math.radians(lon - lon0)
    east = EARTH_RADIUS * math.cos(math.radians(0.5 * (lat + lat0))) * dlon
    north = EARTH_RADIUS * dlat
    return np.array([east, north, alt - alt0])


def _cell(row, name, line):
    raw = row.get(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise InputError(f"line {line}: column {name!r} is not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise InputError(f"line {line}: column {name!r} is not finite")
    return value


def _vector(row, names, line, required=False):
    values = [_cell(row, n, line) for n in names]
    if all(v is None for v in values):
        if required:
            raise InputError(f"line {line}: missing {', '.join(names)}")
        return None
    if any(v is None for v in values):
        raise InputError(f"line {line}: incomplete vector {', '.join(names)}")
    return np.array(values)


def read_log(path) -> FlightLog:
    """Parse a flight log; missing wind is derived from the drone track."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "t" not in header:
            raise InputError(f"{path}: header must contain a 't' column")
        geodetic = all(c in header for c in GEO_COLUMNS)
        if not geodetic and not all(c in header for c in ENU_COLUMNS):
            raise InputError(f"{path}: header needs either {ENU_COLUMNS} or {GEO_COLUMNS}")
        rows = list(enumerate(reader, start=2))

    samples = []
    origin = None
    for line, row in rows:
        t = _cell(row, "t", line)
        if t is None:
            raise InputError(f"line {line}: missing t")
        if geodetic:
            base_g = _vector(row, GEO_COLUMNS[:3], line, required=True)
            drone_g = _vector(row, GEO_COLUMNS[3:], line, required=True)
            if origin is None:
                origin = tuple(base_g)
            base = geodetic_to_local(*base_g, origin)
            drone = geodetic_to_local(*drone_g, origin)
        else:
            base = _vector(row, ENU_COLUMNS[:3], line, required=True)
            drone = _vector(row, ENU_COLUMNS[3:], line, required=True)
        if samples and t <= samples[-1].t:
            raise InputError(f"line {line}: time must be strictly increasing")
        samples.append(FlightSample(
            t=t,
            base_pos=base,
            drone_pos=drone,
            airspeed_3d=_vector(row, WIND_COLUMNS, line),
            drone_accel=_vector(row, ACC_COLUMNS, line),
            measured_tension=_cell(row, "tension_measured", line),
        ))
    if not samples:
        raise InputError(f"{path}: log has no samples")
    log = FlightLog(samples, origin)
    fill_missing_wind(log)
    return log


def write_log(log: FlightLog, path) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        for s in log.samples:
            wind = s.airspeed_3d if s.airspeed_3d is not None else [None] * 3
            acc = s.drone_accel if s.drone_accel is not None else [None] * 3
            w.writerow([fmt(s.t), *map(fmt, s.base_pos), *map(fmt, s.drone_pos),
                        *map(fmt, wind), *map(fmt, acc), fmt(s.measured_tension)])


def _velocity(log: FlightLog) -> np.ndarray:
    pos = np.array([s.drone_pos for s in log.samples])
    if len(log) < 2:
        return np.zeros_like(pos)
    return np.gradient(pos, log.times, axis=0)


def fill_missing_wind(log: FlightLog) -> None:
    """Use the negated drone velocity (still air) where no wind was logged."""
    missing = [i for i, s in enumerate(log.samples) if s.airspeed_3d is None]
    if not missing:
        return
    vel = _velocity(log)
    for i in missing:
        log.samples[i].airspeed_3d = -vel[i]
    log.notes["wind_from_drone_velocity"] = len(missing)


def fill_missing_acceleration(log: FlightLog, window: int = 5) -> None:
    """Second differences of drone position, smoothed with a centred moving average."""
    missing = [i for i, s in enumerate(log.samples) if s.drone_accel is None]
    if not missing:
        return
    if len(log) < 3:
        acc = np.zeros((len(log), 3))
    else:
        acc = np.gradient(_velocity(log), log.times, axis=0)
        pad = window // 2
        padded = np.pad(acc, ((pad, pad), (0, 0)), mode="edge")
        kernel = np.ones(window) / window
        acc = np.column_stack([np.convolve(padded[:, c], kernel, mode="valid") for c in range(3)])
    for i in missing:
        log.samples[i].drone_accel = acc[i]
    log.notes["acceleration_from_position"] = {"samples": len(missing), "window": window}


@dataclass
class PlaneProjection:
    bc: PlanarBoundary
    env: Environment
    axis: np.ndarray  # horizontal unit vector of the plane's x axis (east, north)
    out_of_plane_wind: float


def project_to_plane(sample: FlightSample) -> PlaneProjection:
    """Reduce a 3D sample to the vertical plane through base and drone.

    The base sits at ``x = 0``; the drone at ``x >= 0``. Only the in-plane
    horizontal wind is modelled; the remainder is reported.
    """
    base, drone = np.asarray(sample.base_pos, float), np.asarray(sample.drone_pos, float)
    if np.array_equal(base, drone):
        raise DegenerateGeometry("base and drone positions coincide")
    wind = np.zeros(3) if sample.airspeed_3d is None else np.asarray(sample.airspeed_3d, float)
    horiz = drone[:2] - base[:2]
    span = math.hypot(*horiz)
    if span > MIN_PLANE_SPAN:
        axis = horiz / span
    elif math.hypot(*wind[:2]) > 0:
        axis = wind[:2] / math.hypot(*wind[:2])
    else:
        axis = np.array([1.0, 0.0])
    along = float(wind[:2] @ axis)
    across = abs(float(wind[0] * axis[1] - wind[1] * axis[0]))
    acc = (0.0, 0.0)
    if sample.drone_accel is not None:
        a = np.asarray(sample.drone_accel, float)
        acc = (float(a[:2] @ axis), float(a[2]))
    x2 = float(horiz @ axis)
    bc = PlanarBoundary((0.0, float(base[2])), (x2, float(drone[2])), along)
    return PlaneProjection(bc, Environment(along, acc), axis, across)


@dataclass
class TensionRecord:
    t: float
    method: str
    start_tension: float
    end_tension: float
    solve_time: float
    residual_norm: float
    iterations: int = 0
    init_strategy: str = ""
    measured_tension: Optional[float] = None
    out_of_plane_wind: float = 0.0
    error: str = ""


@dataclass
class TensionSeries:
    name: str
    records: list[TensionRecord] = field(default_factory=list)

    def column(self, attr) -> np.ndarray:
        return np.array([np.nan if getattr(r, attr) is None else getattr(r, attr) for r in self.records],
                        dtype=float)

    def ok(self) -> np.ndarray:
        return np.array([r.method != Method.FAILED.value for r in self.records])


def _record(t, sol, proj, measured) -> TensionRecord:
    d = sol.diagnostics
    return TensionRecord(
        t=t,
        method=sol.method.value,
        start_tension=sol.start_tension,
        end_tension=sol.end_tension,
        solve_time=d.solve_time,
        residual_norm=d.residual_norm,
        iterations=d.iterations,
        init_strategy=d.init_strategy or d.guess_used or "",
        measured_tension=measured,
        out_of_plane_wind=proj.out_of_plane_wind,
    )


def _failed(t, exc, measured, proj=None) -> TensionRecord:
    return TensionRecord(
        t=t, method=Method.FAILED.value, start_tension=math.nan, end_tension=math.nan,
        solve_time=math.nan, residual_norm=math.nan, measured_tension=measured,
        out_of_plane_wind=proj.out_of_plane_wind if proj else 0.0, error=f"{type(exc).__name__}: {exc}",
    )


def replay(log: FlightLog, spec: TetherSpec, method: str = "both", init_policy: str = "auto",
           inertia: bool = False, n_segments: int = 60, tol: float = 1e-8) -> dict[str, TensionSeries]:
    """Solve every sample of ``log`` in order.

    Returns one :class:`TensionSeries` per method (``analytical``,
    ``numerical``). Per-sample failures are recorded, never raised.
    """
    if method not in ("analytical", "numerical", "both"):
        raise ValueError(f"unknown method {method!r}")
    if inertia:
        fill_missing_acceleration(log)
    sim = TetherSimulator(spec, n_segments, tol, inertia, init_policy)
    series = {}
    if method in ("analytical", "both"):
        series["analytical"] = TensionSeries("analytical")
    if method in ("numerical", "both"):
        series["numerical"] = TensionSeries("numerical")

    for s in log.samples:
        try:
            proj = project_to_plane(s)
        except TetherError as exc:
            for ts in series.values():
                ts.records.append(_failed(s.t, exc, s.measured_tension))
            sim.reset()
            continue
        env = proj.env if inertia else Environment(proj.env.airspeed)
        analytical = None
        if "analytical" in series:
            try:
                analytical = sim.solve_analytical(proj.bc)
                series["analytical"].records.append(_record(s.t, analytical, proj, s.measured_tension))
            except TetherError as exc:
                series["analytical"].records.append(_failed(s.t, exc, s.measured_tension, proj))
        if "numerical" in series:
            try:
                sol = sim.solve_numerical(proj.bc, env, analytical)
                series["numerical"].records.append(_record(s.t, sol, proj, s.measured_tension))
            except TetherError as exc:
                series["numerical"].records.append(_failed(s.t, exc, s.measured_tension, proj))
    return series


def timing_stats(times: Iterable[float]) -> dict:
    t = np.asarray([x for x in times if np.isfinite(x)], dtype=float)
    if t.size == 0:
        return {"mean_solve_s": None, "median_solve_s": None, "p95_solve_s": None}
    return {
        "mean_solve_s": float(np.mean(t)),
        "median_solve_s": float(np.median(t)),
        "p95_solve_s": float(np.percentile(t, 95)),
    }


def summarize(series: TensionSeries) -> dict:
    """JSON-ready summary: timing statistics and error against measured tension."""
    ok = series.ok()
    out = {"method": series.name, "n_samples": len(series.records)}
    out.update(timing_stats(series.column("solve_time")[ok]))
    measured = series.column("measured_tension")
    diff = np.abs(series.column("end_tension") - measured)
    valid = ok & np.isfinite(diff)
    out["mean_abs_diff_N"] = float(np.mean(diff[valid])) if valid.any() else None
    out["max_abs_diff_N"] = float(np.max(diff[valid])) if valid.any() else None
    out["n_failed"] = int((~ok).sum())
    methods = [r.method for r in series.records]
    out["n_fallback"] = methods.count(Method.ANALYTICAL_FALLBACK.value)
    by_init = {}
    for label in sorted({r.init_strategy for r in series.records if r.method == Method.NUMERICAL.value}):
        times = [r.solve_time for r in series.records
                 if r.method == Method.NUMERICAL.value and r.init_strategy == label]
        by_init[label] = dict(timing_stats(times), n=len(times))
    if by_init:
        out["by_init_strategy"] = by_init
    return out


def compare_series(analytical: TensionSeries, numerical: TensionSeries) -> dict:
    """Endpoint tension differences where the numerical method actually ran."""
    mask = np.array([r.method == Method.NUMERICAL.value for r in numerical.records]) & analytical.ok()
    out = {"n_compared": int(mask.sum())}
    for end in ("start", "end"):
        diff = np.abs(numerical.column(f"{end}_tension") - analytical.column(f"{end}_tension"))[mask]
        out[f"{end}_mean_abs_diff_N"] = float(np.mean(diff)) if diff.size else None
        out[f"{end}_max_abs_diff_N"] = float(np.max(diff)) if diff.size else None
    ref = numerical.column("end_tension")[mask]
    out["mean_end_tension_N"] = float(np.mean(ref)) if ref.size else None
    return out


def difference_rows(analytical: TensionSeries, numerical: TensionSeries):
    for a, n in zip(analytical.records, numerical.records):
        yield {
            "t": a.t,
            "numerical_method": n.method,
            "start_diff_N": n.start_tension - a.start_tension,
            "end_diff_N": n.end_tension - a.end_tension,
        }


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".10g")
    return str(value)


SERIES_COLUMNS = ("t", "method", "start_tension", "end_tension", "measured_tension", "solve_time",
                  "residual_norm", "iterations", "init_strategy", "out_of_plane_wind", "error")


def write_series_csv(series: TensionSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for r in series.records:
            row = asdict(r)
            w.writerow([_fmt(row[c]) for c in SERIES_COLUMNS])


def write_rows_csv(rows, path) -> None:
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def synthetic_flight(spec: TetherSpec, duration: float = 60.0, rate: float = 10.0, max_speed: float = 8.0,
                     altitude: float = 30.0, wind: bool = True, seed: int = 0) -> FlightLog:
    """A drive-out-and-back trace for a drone towed above a ground vehicle.

    The vehicle accelerates along east to ``max_speed``, turns around and
    comes back; the drone holds roughly ``altitude`` with a horizontal offset
    that grows with speed. With ``wind=False`` the log carries zero wind.
    The measured-tension column holds the analytical drone-side tension of each
    state, which makes the log a self-consistent replay oracle.
    """
    from .analytical import solve_with_drag

    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration, 1.0 / rate)
    phase = 2.0 * np.pi * t / duration
    speed = max_speed * np.sin(phase) * np.abs(np.sin(phase)) ** 0.5
    base_x = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    max_reach = math.sqrt(spec.length ** 2 - altitude ** 2) if spec.length > altitude else 0.0
    offset = (0.25 + 0.5 * np.abs(speed) / max(max_speed, 1e-9)) * max_reach
    offset *= 1.0 + 0.05 * np.sin(3.1 * phase)
    alt = altitude - 0.8 * np.abs(np.sin(2.0 * phase)) + 0.05 * rng.standard_normal(t.size)
    north = 0.3 * np.sin(1.7 * phase)

    samples = []
    for i, ti in enumerate(t):
        base = np.array([base_x[i], 0.0, 0.0])
        drone = np.array([base_x[i] + offset[i], north[i], alt[i]])
        air = np.array([-speed[i], 0.0, 0.0]) if wind else np.zeros(3)
        sample = FlightSample(float(ti), base, drone, air, np.zeros(3))
        proj = project_to_plane(sample)
        sample.measured_tension = solve_with_drag(proj.bc, spec).end_tension
        samples.append(sample)
    log = FlightLog(samples)
    log.notes["synthetic"] = {"seed": seed, "max_speed": max_speed, "altitude": altitude, "wind": wind}
    return log

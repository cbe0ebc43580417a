"""Ground-truth world model: where the box is, how warm it is, lid state.

The scenario is a pure function of virtual time -- piecewise-linear route and
temperature profiles, half-open lid intervals, and two ambient light levels.
Sensor sampling adds optional noise drawn from a caller-supplied RNG so the
zero-noise default stays bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from .core import SensorReading


class ScenarioError(ValueError):
    """Raised for queries outside the scenario or inconsistent definitions."""


@dataclass(frozen=True)
class BoxState:
    """Instantaneous physical truth: position, temperature, lux, lid."""

    lat: float
    lon: float
    temp_c: float
    lux: float
    lid_open: bool


@dataclass(frozen=True)
class Scenario:
    """A complete physical timeline for one simulated shipment."""

    duration_ms: int
    route: tuple[tuple[int, float, float], ...]          # (time_ms, lat, lon)
    temp_profile: tuple[tuple[int, float], ...]           # (time_ms, deg C)
    open_events: tuple[tuple[int, int], ...] = ()         # [start_ms, end_ms)
    lux_open: float = 10000.0
    lux_closed: float = 0.5
    lux_threshold: float = 50.0
    temp_noise_c: float = 0.0
    gps_noise_deg: float = 0.0
    name: str = "scenario"

    def __post_init__(self) -> None:
        object.__setattr__(self, "route", tuple(tuple(p) for p in self.route))
        object.__setattr__(self, "temp_profile", tuple(tuple(p) for p in self.temp_profile))
        object.__setattr__(self, "open_events", tuple(tuple(w) for w in self.open_events))
        if self.duration_ms <= 0:
            raise ScenarioError("duration_ms must be positive")
        if not self.route:
            raise ScenarioError("route needs at least one waypoint")
        if not self.temp_profile:
            raise ScenarioError("temp_profile needs at least one point")
        for seq, label in ((self.route, "route"), (self.temp_profile, "temp_profile")):
            times = [p[0] for p in seq]
            if times != sorted(times):
                raise ScenarioError(f"{label} times must be non-decreasing")
        for start, end in self.open_events:
            if not start < end:
                raise ScenarioError(f"open event [{start}, {end}) is empty or reversed")
        if not self.lux_closed < self.lux_threshold <= self.lux_open:
            raise ScenarioError(
                "need lux_closed < lux_threshold <= lux_open, got "
                f"({self.lux_closed}, {self.lux_threshold}, {self.lux_open})"
            )

    def to_spec(self) -> dict:
        return {
            "name": self.name,
            "duration_ms": self.duration_ms,
            "route": [list(p) for p in self.route],
            "temp_profile": [list(p) for p in self.temp_profile],
            "open_events": [list(w) for w in self.open_events],
            "lux_open": self.lux_open,
            "lux_closed": self.lux_closed,
            "lux_threshold": self.lux_threshold,
            "temp_noise_c": self.temp_noise_c,
            "gps_noise_deg": self.gps_noise_deg,
        }


def scenario_from_spec(spec: dict, name: str = "scenario") -> Scenario:
    """Build a Scenario from its parsed config mapping."""
    try:
        return Scenario(
            duration_ms=int(spec["duration_ms"]),
            route=tuple((int(t), float(lat), float(lon)) for t, lat, lon in spec["route"]),
            temp_profile=tuple((int(t), float(v)) for t, v in spec["temp_profile"]),
            open_events=tuple((int(a), int(b)) for a, b in spec.get("open_events", ())),
            lux_open=float(spec.get("lux_open", 10000.0)),
            lux_closed=float(spec.get("lux_closed", 0.5)),
            lux_threshold=float(spec.get("lux_threshold", 50.0)),
            temp_noise_c=float(spec.get("temp_noise_c", 0.0)),
            gps_noise_deg=float(spec.get("gps_noise_deg", 0.0)),
            name=str(spec.get("name", name)),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"bad scenario definition: {exc!r}") from exc


def _interp(points, time_ms: float):
    """Piecewise-linear interpolation over (time, v1[, v2]) tuples.

    Outside the covered span the nearest endpoint value holds steady.
    """
    if time_ms <= points[0][0]:
        return points[0][1:]
    if time_ms >= points[-1][0]:
        return points[-1][1:]
    for (t0, *v0), (t1, *v1) in zip(points, points[1:]):
        if t0 <= time_ms <= t1:
            if t1 == t0:
                return tuple(v1)
            frac = (time_ms - t0) / (t1 - t0)
            return tuple(a + (b - a) * frac for a, b in zip(v0, v1))
    raise AssertionError("unreachable: points are sorted")


def ground_truth(scenario: Scenario, time_ms: float) -> BoxState:
    """Exact physical state at ``time_ms``; pure, no randomness."""
    if not 0 <= time_ms <= scenario.duration_ms:
        raise ScenarioError(
            f"time {time_ms} outside scenario [0, {scenario.duration_ms}]"
        )
    lat, lon = _interp(scenario.route, time_ms)
    (temp_c,) = _interp(scenario.temp_profile, time_ms)
    lid_open = any(start <= time_ms < end for start, end in scenario.open_events)
    lux = scenario.lux_open if lid_open else scenario.lux_closed
    return BoxState(lat=lat, lon=lon, temp_c=temp_c, lux=lux, lid_open=lid_open)


def sample_sensors(scenario: Scenario, time_ms: float,
                   lux_threshold: float | None = None,
                   rng: Random | None = None) -> SensorReading:
    """What the device's sensors report at ``time_ms``.

    Brightness is the thresholded lux value; temperature and GPS optionally
    carry additive noise (``rng`` required if either noise level is nonzero).
    With zero noise the reading equals ground truth exactly.
    """
    state = ground_truth(scenario, time_ms)
    threshold = scenario.lux_threshold if lux_threshold is None else lux_threshold
    temp_c, lat, lon = state.temp_c, state.lat, state.lon
    if scenario.temp_noise_c or scenario.gps_noise_deg:
        if rng is None:
            raise ScenarioError("noisy scenario needs an rng")
        temp_c += rng.gauss(0.0, scenario.temp_noise_c) if scenario.temp_noise_c else 0.0
        if scenario.gps_noise_deg:
            lat += rng.gauss(0.0, scenario.gps_noise_deg)
            lon += rng.gauss(0.0, scenario.gps_noise_deg)
    return SensorReading(
        bright=1 if state.lux > threshold else 0,
        temp_c=temp_c,
        lat=lat,
        lon=lon,
    )

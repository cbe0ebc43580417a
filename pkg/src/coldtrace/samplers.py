"""Latency/duration samplers used by the device, channel, and chain models.

Three kinds cover every configuration in the repo:

* ``constant`` -- always the same value,
* ``uniform``  -- uniform float over [low, high],
* ``cycle``    -- deterministic repetition of a fixed value list (used by
  adversarial schedules that need exact per-block values).

Samplers carry their analytic mean and support bounds so configs can be
validated and audits can derive worst-case parameters without sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from random import Random


@dataclass
class Sampler:
    kind: str
    value: float = 0.0
    low: float = 0.0
    high: float = 0.0
    values: tuple[float, ...] = ()
    _next: int = 0

    def sample(self, rng: Random) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high)
        if self.kind == "cycle":
            v = self.values[self._next % len(self.values)]
            self._next += 1
            return v
        raise ValueError(f"unknown sampler kind {self.kind!r}")

    @property
    def mean(self) -> float:
        """Analytic mean of the distribution (cycle: mean of one period)."""
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return (self.low + self.high) / 2.0
        return sum(self.values) / len(self.values)

    @property
    def max(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return self.high
        return max(self.values)

    @property
    def min(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return self.low
        return min(self.values)

    def reset(self) -> None:
        """Rewind a cycle sampler to its first value (no-op for the others)."""
        self._next = 0

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "uniform":
            return {"kind": "uniform", "low": self.low, "high": self.high}
        return {"kind": "cycle", "values": list(self.values)}


def constant(value: float) -> Sampler:
    return Sampler(kind="constant", value=float(value))


def uniform(low: float, high: float) -> Sampler:
    if not low <= high:
        raise ValueError(f"uniform sampler needs low <= high, got ({low}, {high})")
    return Sampler(kind="uniform", low=float(low), high=float(high))


def cycle(values) -> Sampler:
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError("cycle sampler needs at least one value")
    return Sampler(kind="cycle", values=values)


def from_spec(spec) -> Sampler:
    """Build a sampler from its config mapping (or a bare number)."""
    if isinstance(spec, (int, float)):
        return constant(float(spec))
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"sampler spec must be a number or mapping with 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "constant":
        return constant(spec["value"])
    if kind == "uniform":
        return uniform(spec["low"], spec["high"])
    if kind == "cycle":
        return cycle(spec["values"])
    raise ValueError(f"unknown sampler kind {kind!r}")

"""Radio link between device and agent: latency, random loss, jam windows.

Jamming is modeled at send time: a message whose transmission starts inside
any half-open jam window is silently destroyed, in either direction (uploads,
alarms, and returning ACKs all cross the same air).  Random loss applies
outside jam windows with the configured probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from .samplers import Sampler


@dataclass(frozen=True)
class ChannelConfig:
    latency: Sampler = None  # type: ignore[assignment]
    jam_windows_ms: tuple[tuple[float, float], ...] = ()
    loss_rate: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "jam_windows_ms",
            tuple((float(a), float(b)) for a, b in self.jam_windows_ms),
        )
        for start, end in self.jam_windows_ms:
            if not start < end:
                raise ValueError(f"jam window [{start}, {end}) is empty or reversed")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError(f"loss_rate must be in [0, 1], got {self.loss_rate}")

    def to_spec(self) -> dict:
        return {
            "latency_ms": self.latency.to_spec(),
            "jam_windows_ms": [list(w) for w in self.jam_windows_ms],
            "loss_rate": self.loss_rate,
        }


@dataclass(frozen=True)
class Delivered:
    arrival_ms: float


@dataclass(frozen=True)
class Dropped:
    reason: str  # "jam" or "loss"


@dataclass
class Channel:
    cfg: ChannelConfig
    rng: Random = field(repr=False, default=None)  # type: ignore[assignment]

    def jammed_at(self, time_ms: float) -> bool:
        return any(start <= time_ms < end for start, end in self.cfg.jam_windows_ms)

    def transmit(self, send_ms: float) -> Delivered | Dropped:
        """Fate of one message whose transmission starts at ``send_ms``."""
        if self.jammed_at(send_ms):
            return Dropped(reason="jam")
        if self.cfg.loss_rate > 0.0 and self.rng.random() < self.cfg.loss_rate:
            return Dropped(reason="loss")
        return Delivered(arrival_ms=send_ms + self.cfg.latency.sample(self.rng))

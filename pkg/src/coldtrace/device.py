"""Sealed sensing device: periodic sense/sign/seal cycles and upload recovery.

Each cycle the device samples its sensors, raises alarms for any safety
violation (alarms leave immediately and are independent of upload recovery),
signs the new record, drains its backup queue into the outgoing message, and
seals the whole batch for the agent.  Unacknowledged messages are re-queued
at the next cycle; when the backlog would exceed ``max_backlog`` the device
halts permanently with the terminal error below.
"""

from __future__ import annotations

import enum
import math
from bisect import insort
from dataclasses import dataclass, field
from random import Random

from . import crypto
from .core import (
    MSG_ABNORMAL_TEMPERATURE,
    MSG_BOX_OPENED,
    MSG_ROUTE_DEVIATED,
    AlarmMessage,
    Pattern,
    Record,
    SensorReading,
    UploadMessage,
    canonical_encode,
    encode_alarm_body,
    encode_record_body,
)
from .environment import Scenario, sample_sensors
from .samplers import Sampler

# Terminal failure text; emitted verbatim when recovery capacity is exhausted.
RECOVERY_EXHAUSTED = "Exceed maximum recovery tolerance"

EARTH_RADIUS_M = 6371000.0


class RecoveryOverflow(RuntimeError):
    """The backup queue would exceed its capacity; the device has halted."""


def dist_meters(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Ground distance via equirectangular projection about the mid-latitude.

    Accurate to well under 0.5% for the sub-10 km legs a shipment check
    cares about; longitude differences are wrapped so routes crossing the
    antimeridian measure the short way around.
    """
    dlon = (lon2 - lon1 + 180.0) % 360.0 - 180.0
    mid_lat = math.radians((lat1 + lat2) / 2.0)
    x = math.radians(dlon) * math.cos(mid_lat)
    y = math.radians(lat2 - lat1)
    return EARTH_RADIUS_M * math.hypot(x, y)


# --- violation checking -----------------------------------------------------------

class ViolationKind(enum.Enum):
    BOX_OPENED = MSG_BOX_OPENED
    ABNORMAL_TEMPERATURE = MSG_ABNORMAL_TEMPERATURE
    ROUTE_DEVIATED = MSG_ROUTE_DEVIATED


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str

    @property
    def message(self) -> str:
        return self.kind.value


def violation_check(reading: SensorReading, pattern: Pattern) -> list[Violation]:
    """All safety-envelope violations in ``reading``, in a fixed order."""
    found: list[Violation] = []
    if reading.bright not in pattern.allowed_brightness:
        found.append(Violation(
            ViolationKind.BOX_OPENED,
            f"brightness flag {reading.bright} not in allowed set",
        ))
    lo, hi = pattern.temp_range_c
    if not lo <= reading.temp_c <= hi:
        found.append(Violation(
            ViolationKind.ABNORMAL_TEMPERATURE,
            f"temperature {reading.temp_c:.3f} C outside [{lo}, {hi}]",
        ))
    if pattern.checkpoints:
        overshoot = min(
            dist_meters(reading.lat, reading.lon, cp.lat, cp.lon) - cp.radius_m
            for cp in pattern.checkpoints
        )
        if overshoot > 0.0:
            found.append(Violation(
                ViolationKind.ROUTE_DEVIATED,
                f"{overshoot:.1f} m outside every checkpoint radius",
            ))
    return found


# --- the device itself --------------------------------------------------------------

@dataclass(frozen=True)
class DeviceConfig:
    device_id: str
    key_seed: bytes = field(repr=False, default=b"")
    sense_interval_ms: int = 10000
    first_sense_ms: int | None = None       # default: one full interval in
    max_backlog: int = 5
    clock_skew_ms: int = 0
    sense_delay: Sampler = None  # type: ignore[assignment]
    pattern: Pattern = field(default_factory=Pattern)

    def __post_init__(self) -> None:
        if self.sense_interval_ms <= 0:
            raise ValueError("sense_interval_ms must be positive")
        if self.max_backlog < 0:
            raise ValueError("max_backlog must be >= 0")
        if self.first_sense_ms is None:
            object.__setattr__(self, "first_sense_ms", self.sense_interval_ms)
        if self.first_sense_ms + self.clock_skew_ms < 0:
            raise ValueError("clock skew would push device timestamps negative")

    def to_spec(self) -> dict:
        """Config snapshot for traces; key material deliberately excluded."""
        return {
            "device_id": self.device_id,
            "sense_interval_ms": self.sense_interval_ms,
            "first_sense_ms": self.first_sense_ms,
            "max_backlog": self.max_backlog,
            "clock_skew_ms": self.clock_skew_ms,
            "sense_delay_ms": self.sense_delay.to_spec(),
            "pattern": {
                "allowed_brightness": sorted(self.pattern.allowed_brightness),
                "temp_range_c": list(self.pattern.temp_range_c),
                "checkpoints": [
                    {"lat": cp.lat, "lon": cp.lon, "radius_m": cp.radius_m}
                    for cp in self.pattern.checkpoints
                ],
            },
        }


@dataclass
class SenseOutcome:
    """Everything one sense cycle produced, ready for the simulator to route."""

    upload: UploadMessage
    record: Record
    alarm: AlarmMessage | None
    violations: list[Violation]
    ready_ms: float                      # when the upload leaves the radio
    batch: tuple[Record, ...]            # plaintext content of the upload
    requeued: tuple[Record, ...]         # records pushed to backlog this cycle


class Device:
    """State machine for one sealed box.  Not thread-safe; sim-loop confined."""

    def __init__(self, cfg: DeviceConfig, session: crypto.SessionKey, rng: Random):
        self.cfg = cfg
        self.keys = crypto.keygen(cfg.key_seed)
        self.session = session
        self.rng = rng
        self.backup_queue: list[Record] = []
        self.outstanding: dict[int, tuple[Record, ...]] = {}
        self.counter = 0
        self.status = "running"
        self.failure_reason: str | None = None

    # -- queue plumbing --

    def _queue_ts(self) -> set[int]:
        return {r.t_ms for r in self.backup_queue}

    def _requeue(self, records: tuple[Record, ...]) -> list[Record]:
        """Re-insert a timed-out message's records; halt on capacity overflow."""
        present = self._queue_ts()
        added = []
        for rec in records:
            if rec.t_ms in present:
                continue
            if len(self.backup_queue) >= self.cfg.max_backlog:
                self.status = "failed"
                self.failure_reason = RECOVERY_EXHAUSTED
                raise RecoveryOverflow(RECOVERY_EXHAUSTED)
            insort(self.backup_queue, rec, key=lambda r: r.t_ms)
            present.add(rec.t_ms)
            added.append(rec)
        return added

    def _assert_queue_sane(self) -> None:
        ts = [r.t_ms for r in self.backup_queue]
        assert len(self.backup_queue) <= self.cfg.max_backlog
        assert all(b - a == self.cfg.sense_interval_ms for a, b in zip(ts, ts[1:])), \
            "backlog must hold consecutive cycles"

    # -- protocol operations --

    def sense_cycle(self, now_ms: int, scenario: Scenario) -> SenseOutcome:
        """Run one full cycle at global time ``now_ms``; returns the outputs.

        Raises :class:`RecoveryOverflow` (and flips status to failed) when the
        pending backlog plus this cycle's unacknowledged record no longer fit.
        """
        if self.status != "running":
            raise RuntimeError(f"device is {self.status}: {self.failure_reason}")

        # Any message still unacknowledged after a full interval counts as
        # failed; its records go (back) into the queue before this cycle runs.
        requeued: list[Record] = []
        for msg_id in sorted(self.outstanding):
            requeued += self._requeue(self.outstanding.pop(msg_id))

        t_ms = now_ms + self.cfg.clock_skew_ms
        reading = sample_sensors(scenario, now_ms, rng=self.rng)
        violations = violation_check(reading, self.cfg.pattern)

        alarm = None
        if violations:
            messages = tuple(v.message for v in violations)
            alarm_sig = crypto.sign(encode_alarm_body(t_ms, messages), self.keys.sign_sk)
            alarm = AlarmMessage(t_ms=t_ms, messages=messages, sig=alarm_sig)

        record_sig = crypto.sign(encode_record_body(t_ms, reading), self.keys.sign_sk)
        record = Record(t_ms=t_ms, reading=reading, sig=record_sig)

        # Oldest backlog first, new record last.  The queue keeps its copies
        # until an ACK confirms them delivered.
        batch = tuple(self.backup_queue) + (record,)
        nonce = crypto.counter_nonce(self.counter)
        blob = crypto.seal(
            canonical_encode(list(batch)),
            self.session,
            nonce,
            crypto.upload_aad(self.cfg.device_id, nonce),
        )
        upload = UploadMessage(device_id=self.cfg.device_id, ciphertext=blob)
        self.outstanding[self.counter] = batch
        self.counter += 1
        self._assert_queue_sane()

        return SenseOutcome(
            upload=upload,
            record=record,
            alarm=alarm,
            violations=violations,
            ready_ms=now_ms + self.cfg.sense_delay.sample(self.rng),
            batch=batch,
            requeued=tuple(requeued),
        )

    def handle_ack(self, msg_id: int) -> None:
        """Process an agent ACK: the message's records are confirmed durable."""
        records = self.outstanding.pop(msg_id, None)
        if records is None:
            return  # duplicate or post-timeout ACK; removal is idempotent
        acked = {r.t_ms for r in records}
        self.backup_queue = [r for r in self.backup_queue if r.t_ms not in acked]
        self._assert_queue_sane()

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key

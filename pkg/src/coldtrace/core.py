"""Core value types and the canonical byte encoding shared by every layer.

The encoding is the interop surface: device signatures and sealed payloads
are computed over these exact bytes, so the layout is fixed (big-endian,
tagged, length-prefixed) and injective -- two distinct values never encode
to the same byte string.  See README "Wire formats" for the byte layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field


class EncodingError(ValueError):
    """Raised when a value cannot be canonically encoded (e.g. NaN/inf)."""


class DecodeError(ValueError):
    """Raised on truncated, trailing, or mis-tagged canonical bytes."""


# --- type tags ---------------------------------------------------------------

TAG_READING = 0x01
TAG_RECORD_BODY = 0x02   # (t, reading) -- the signing payload of a record
TAG_RECORD = 0x03        # record body + signature
TAG_ALARM_BODY = 0x04    # (t, messages) -- the signing payload of an alarm
TAG_ALARM = 0x05         # alarm body + signature
TAG_RECORD_LIST = 0x06   # upload plaintext: 1..N records, ascending t

# Canonical alarm texts a sealed box can raise.  These exact strings are part
# of the protocol surface; auditors and dashboards match on them verbatim.
MSG_BOX_OPENED = "Box opened"
MSG_ABNORMAL_TEMPERATURE = "Abnormal Temperature"
MSG_ROUTE_DEVIATED = "Route Deviated"
ALARM_TEXTS = (MSG_BOX_OPENED, MSG_ABNORMAL_TEMPERATURE, MSG_ROUTE_DEVIATED)

_U64_MAX = 2**64 - 1


# --- value types --------------------------------------------------------------

@dataclass(frozen=True)
class SensorReading:
    """One sample of the sealed box: brightness flag, temperature, GPS fix.

    ``bright`` is the thresholded photosensor output (0 dark / 1 lit), not a
    raw lux value; the threshold lives in the scenario.
    """

    bright: int
    temp_c: float
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if self.bright not in (0, 1):
            raise ValueError(f"bright flag must be 0 or 1, got {self.bright!r}")
        for name, value in (("temp_c", self.temp_c), ("lat", self.lat), ("lon", self.lon)):
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat out of range [-90, 90]: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon out of range [-180, 180]: {self.lon}")


@dataclass(frozen=True)
class Record:
    """A timestamped reading plus the device's signature over (t, reading)."""

    t_ms: int
    reading: SensorReading
    sig: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.t_ms, int) or not 0 <= self.t_ms <= _U64_MAX:
            raise ValueError(f"t_ms must be a u64 millisecond stamp, got {self.t_ms!r}")
        if not isinstance(self.sig, (bytes, bytearray)):
            raise ValueError("sig must be bytes")
        object.__setattr__(self, "sig", bytes(self.sig))


@dataclass(frozen=True)
class AlarmMessage:
    """Immediate violation report: device timestamp, texts, signature."""

    t_ms: int
    messages: tuple[str, ...]
    sig: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.t_ms, int) or not 0 <= self.t_ms <= _U64_MAX:
            raise ValueError(f"t_ms must be a u64 millisecond stamp, got {self.t_ms!r}")
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("alarm must carry at least one message")
        for m in self.messages:
            if m not in ALARM_TEXTS:
                raise ValueError(f"unknown alarm text: {m!r}")
        object.__setattr__(self, "sig", bytes(self.sig))


@dataclass(frozen=True)
class UploadMessage:
    """Sealed upload: device id in the clear, AEAD blob (nonce || ciphertext).

    The first 12 bytes of ``ciphertext`` are the seal nonce, which doubles as
    the device's monotonic message counter, so ``msg_id`` needs no extra field.
    """

    device_id: str
    ciphertext: bytes

    @property
    def msg_id(self) -> int:
        if len(self.ciphertext) < 12:
            raise DecodeError("ciphertext shorter than its 12-byte nonce prefix")
        return int.from_bytes(self.ciphertext[:12], "big")


@dataclass(frozen=True)
class Checkpoint:
    """Planned-route waypoint with an allowed radius in meters."""

    lat: float
    lon: float
    radius_m: float


@dataclass(frozen=True)
class Pattern:
    """Owner-defined safety envelope the device checks every cycle."""

    allowed_brightness: frozenset[int] = field(default_factory=lambda: frozenset({0}))
    temp_range_c: tuple[float, float] = (13.0, 15.0)
    checkpoints: tuple[Checkpoint, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "allowed_brightness", frozenset(self.allowed_brightness))
        object.__setattr__(self, "temp_range_c", tuple(self.temp_range_c))
        object.__setattr__(self, "checkpoints", tuple(self.checkpoints))
        lo, hi = self.temp_range_c
        if not lo <= hi:
            raise ValueError(f"temp_range_c must be (lo, hi) with lo <= hi, got {self.temp_range_c}")


@dataclass(frozen=True)
class DigitalEntity:
    """Chain-side view of one device: committed records in block order.

    Each element pairs the record with the commit time of its containing
    block.  Honest construction yields strictly increasing timestamps; the
    container itself stays permissive so audits of tampered ledgers can still
    run and report the damage instead of crashing.
    """

    device_id: str
    records: tuple[tuple[Record, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)


# --- canonical encoding -------------------------------------------------------

def _pack_f64(name: str, value: float) -> bytes:
    value = float(value)
    if not math.isfinite(value):
        raise EncodingError(f"{name} is not finite: {value!r}")
    return struct.pack(">d", value)


def _pack_u64(name: str, value: int) -> bytes:
    if not isinstance(value, int) or not 0 <= value <= _U64_MAX:
        raise EncodingError(f"{name} does not fit u64: {value!r}")
    return struct.pack(">Q", value)


def _reading_fields(reading: SensorReading) -> bytes:
    return (
        struct.pack(">B", reading.bright)
        + _pack_f64("temp_c", reading.temp_c)
        + _pack_f64("lat", reading.lat)
        + _pack_f64("lon", reading.lon)
    )


def encode_record_body(t_ms: int, reading: SensorReading) -> bytes:
    """Signing payload of a record: tag, u64 timestamp, reading fields."""
    return bytes([TAG_RECORD_BODY]) + _pack_u64("t_ms", t_ms) + _reading_fields(reading)


def encode_alarm_body(t_ms: int, messages: tuple[str, ...]) -> bytes:
    """Signing payload of an alarm: tag, u64 timestamp, counted utf-8 texts."""
    if len(messages) > 0xFFFF:
        raise EncodingError("too many alarm messages")
    out = bytearray([TAG_ALARM_BODY])
    out += _pack_u64("t_ms", t_ms)
    out += struct.pack(">H", len(messages))
    for m in messages:
        raw = m.encode("utf-8")
        out += struct.pack(">I", len(raw)) + raw
    return bytes(out)


def canonical_encode(value) -> bytes:
    """Encode any core value (or a record list) to its canonical bytes."""
    if isinstance(value, SensorReading):
        return bytes([TAG_READING]) + _reading_fields(value)
    if isinstance(value, Record):
        body = encode_record_body(value.t_ms, value.reading)[1:]
        return (
            bytes([TAG_RECORD])
            + body
            + struct.pack(">I", len(value.sig))
            + value.sig
        )
    if isinstance(value, AlarmMessage):
        body = encode_alarm_body(value.t_ms, value.messages)[1:]
        return (
            bytes([TAG_ALARM])
            + body
            + struct.pack(">I", len(value.sig))
            + value.sig
        )
    if isinstance(value, (list, tuple)):
        if not all(isinstance(r, Record) for r in value):
            raise EncodingError("record list may only contain Record values")
        if len(value) > 0xFFFFFFFF:
            raise EncodingError("record list too long")
        out = bytearray([TAG_RECORD_LIST])
        out += struct.pack(">I", len(value))
        for r in value:
            out += canonical_encode(r)
        return bytes(out)
    raise EncodingError(f"no canonical encoding for {type(value).__name__}")


class _Cursor:
    """Strict reader over canonical bytes; every take checks remaining length."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(
                f"truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def f64(self) -> float:
        value = struct.unpack(">d", self.take(8))[0]
        if not math.isfinite(value):
            raise DecodeError(f"non-finite float at offset {self.pos - 8}")
        return value

    def expect_tag(self, tag: int) -> None:
        got = self.u8()
        if got != tag:
            raise DecodeError(f"tag mismatch: expected 0x{tag:02x}, got 0x{got:02x}")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes after value")


def _read_reading(cur: _Cursor) -> SensorReading:
    bright = cur.u8()
    if bright not in (0, 1):
        raise DecodeError(f"bright flag must be 0 or 1, got {bright}")
    temp_c = cur.f64()
    lat = cur.f64()
    lon = cur.f64()
    try:
        return SensorReading(bright=bright, temp_c=temp_c, lat=lat, lon=lon)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc


def _read_record(cur: _Cursor) -> Record:
    cur.expect_tag(TAG_RECORD)
    t_ms = cur.u64()
    reading = _read_reading(cur)
    sig = cur.take(cur.u32())
    return Record(t_ms=t_ms, reading=reading, sig=sig)


def canonical_decode(data: bytes):
    """Inverse of :func:`canonical_encode`; strict, rejects trailing bytes."""
    if not data:
        raise DecodeError("empty input")
    cur = _Cursor(bytes(data))
    tag = data[0]
    if tag == TAG_READING:
        cur.expect_tag(TAG_READING)
        value = _read_reading(cur)
    elif tag == TAG_RECORD:
        value = _read_record(cur)
    elif tag == TAG_ALARM:
        cur.expect_tag(TAG_ALARM)
        t_ms = cur.u64()
        count = cur.u16()
        messages = []
        for _ in range(count):
            raw = cur.take(cur.u32())
            try:
                messages.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise DecodeError("alarm text is not valid utf-8") from exc
        sig = cur.take(cur.u32())
        try:
            value = AlarmMessage(t_ms=t_ms, messages=tuple(messages), sig=sig)
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc
    elif tag == TAG_RECORD_LIST:
        cur.expect_tag(TAG_RECORD_LIST)
        count = cur.u32()
        value = [ _read_record(cur) for _ in range(count) ]
    else:
        raise DecodeError(f"unknown tag 0x{tag:02x}")
    cur.done()
    return value

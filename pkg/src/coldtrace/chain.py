"""Permissioned ledger with partially-synchronous block production.

Block production is driven by periodic global-stabilization times (GSTs): at
each GST every pooled transaction that arrived strictly before it is pulled
into a block, and the block becomes readable at its commit time
``gst + block_time`` with ``block_time`` in (0, sync_period].  Empty blocks
are produced when the pool is idle, so commit cadence never stalls.

The receiving agent is the chain's front door: it opens sealed uploads,
verifies every record signature, deduplicates resends by (device, timestamp),
and ACKs the device before the commit even happens -- durability inside the
trust domain starts at the pool.

Byzantine nodes are modeled as divergent read views only (they skip odd-depth
blocks); reads for auditing always come from the correct-node majority.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from . import crypto
from .core import (
    AlarmMessage,
    DecodeError,
    DigitalEntity,
    Record,
    SensorReading,
    UploadMessage,
    canonical_decode,
    encode_alarm_body,
    encode_record_body,
)
from .samplers import Sampler


@dataclass(frozen=True)
class GstGap:
    """How far apart consecutive GSTs are: a constant or a bounded sampler."""

    mode: str                      # "constant" | "bounded"
    value: float = 0.0             # constant gap
    bound: float = 0.0             # upper bound for sampled gaps
    sampler: Sampler | None = None

    def __post_init__(self) -> None:
        if self.mode == "constant":
            if self.value <= 0:
                raise ValueError("constant GST gap must be positive")
        elif self.mode == "bounded":
            if self.sampler is None or self.bound <= 0:
                raise ValueError("bounded GST gap needs a sampler and a positive bound")
            if self.sampler.max > self.bound or self.sampler.min <= 0:
                raise ValueError("bounded GST sampler must stay within (0, bound]")
        else:
            raise ValueError(f"unknown GST gap mode {self.mode!r}")

    @property
    def max_gap(self) -> float:
        return self.value if self.mode == "constant" else self.bound

    @property
    def min_gap(self) -> float:
        return self.value if self.mode == "constant" else self.sampler.min

    def next_gap(self, rng: Random) -> float:
        if self.mode == "constant":
            return self.value
        gap = self.sampler.sample(rng)
        assert 0 < gap <= self.bound
        return gap

    def to_spec(self) -> dict:
        if self.mode == "constant":
            return {"mode": "constant", "value": self.value}
        return {"mode": "bounded", "bound": self.bound, "sampler": self.sampler.to_spec()}


@dataclass(frozen=True)
class ChainParams:
    node_count: int = 6
    byzantine_count: int = 1
    gst_gap: GstGap = None  # type: ignore[assignment]
    sync_period_ms: float = 50.0
    block_time: Sampler = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.node_count < 3 * self.byzantine_count + 1:
            raise ValueError(
                f"need node_count >= 3*byzantine_count + 1, got "
                f"{self.node_count} nodes with {self.byzantine_count} byzantine"
            )
        if self.sync_period_ms <= 0:
            raise ValueError("sync_period_ms must be positive")
        if self.block_time.min <= 0 or self.block_time.max > self.sync_period_ms:
            raise ValueError("block_time support must lie in (0, sync_period_ms]")
        if self.gst_gap.min_gap < self.sync_period_ms:
            raise ValueError(
                "GST gap may not undercut the sync period "
                "(block production would overlap the next GST)"
            )

    def to_spec(self) -> dict:
        return {
            "node_count": self.node_count,
            "byzantine_count": self.byzantine_count,
            "gst_gap_ms": self.gst_gap.to_spec(),
            "sync_period_ms": self.sync_period_ms,
            "block_time_ms": self.block_time.to_spec(),
        }


@dataclass(frozen=True)
class PoolTx:
    kind: str                 # "record" | "alarm"
    device_id: str
    t_ms: int
    payload: Record | AlarmMessage
    arrival_ms: float


@dataclass(frozen=True)
class Block:
    depth: int
    gst_ms: float
    commit_ms: float
    txs: tuple[PoolTx, ...]


@dataclass(frozen=True)
class Ack:
    device_id: str
    msg_id: int


@dataclass(frozen=True)
class Reject:
    device_id: str
    reason: str


@dataclass
class ReceiveResult:
    verdict: Ack | Reject
    pooled_ts: tuple[int, ...] = ()
    duplicate_ts: tuple[int, ...] = ()


class Chain:
    """Agent + pool + nodes for a single run.  Sim-loop confined."""

    def __init__(self, params: ChainParams, session: crypto.SessionKey,
                 device_public_key: bytes, max_records_per_upload: int):
        self.params = params
        self.session = session
        self.device_public_key = device_public_key
        self.max_records_per_upload = max_records_per_upload
        self.pool: list[PoolTx] = []
        self.seen: set[tuple[str, int, str]] = set()
        self.blocks: list[Block] = []
        self.node_ledgers: list[list[Block]] = [[] for _ in range(params.node_count)]
        self.prev_gst_ms = 0.0
        self.commit_times: dict[tuple[str, int], float] = {}

    # -- agent front door --

    def receive_upload(self, upload: UploadMessage, arrival_ms: float) -> ReceiveResult:
        """Validate one sealed upload; pool fresh records; ACK or reject."""

        def reject(reason: str) -> ReceiveResult:
            return ReceiveResult(verdict=Reject(upload.device_id, reason))

        try:
            msg_id = upload.msg_id
            nonce = upload.ciphertext[: crypto.NONCE_LEN]
            plaintext = crypto.open_sealed(
                upload.ciphertext, self.session,
                crypto.upload_aad(upload.device_id, nonce),
            )
        except (crypto.OpenError, DecodeError) as exc:
            return reject(f"open failed: {exc}")
        try:
            records = canonical_decode(plaintext)
        except DecodeError as exc:
            return reject(f"payload decode failed: {exc}")
        if not isinstance(records, list) or not records:
            return reject("payload is not a record batch")
        if len(records) > self.max_records_per_upload:
            return reject(f"batch of {len(records)} exceeds permitted size")
        ts = [r.t_ms for r in records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            return reject("record timestamps not strictly increasing")
        for r in records:
            if not crypto.verify(encode_record_body(r.t_ms, r.reading), r.sig,
                                 self.device_public_key):
                return reject(f"bad record signature at t={r.t_ms}")

        pooled, duplicate = [], []
        for r in records:
            key = (upload.device_id, r.t_ms, "record")
            if key in self.seen:
                duplicate.append(r.t_ms)
                continue
            self.seen.add(key)
            self.pool.append(PoolTx(
                kind="record", device_id=upload.device_id, t_ms=r.t_ms,
                payload=r, arrival_ms=arrival_ms,
            ))
            pooled.append(r.t_ms)
        return ReceiveResult(
            verdict=Ack(upload.device_id, msg_id),
            pooled_ts=tuple(pooled),
            duplicate_ts=tuple(duplicate),
        )

    def receive_alarm(self, device_id: str, alarm: AlarmMessage, arrival_ms: float) -> bool:
        """Verify and pool an alarm; returns False (and drops it) if forged."""
        if not crypto.verify(encode_alarm_body(alarm.t_ms, alarm.messages),
                             alarm.sig, self.device_public_key):
            return False
        key = (device_id, alarm.t_ms, "alarm")
        if key not in self.seen:
            self.seen.add(key)
            self.pool.append(PoolTx(
                kind="alarm", device_id=device_id, t_ms=alarm.t_ms,
                payload=alarm, arrival_ms=arrival_ms,
            ))
        return True

    # -- block production --

    def next_gst(self, rng: Random) -> float:
        """Advance to and return the next global stabilization time."""
        self.prev_gst_ms += self.params.gst_gap.next_gap(rng)
        return self.prev_gst_ms

    def produce_block(self, gst_ms: float, rng: Random) -> Block:
        """Cut the block for ``gst_ms``: everything pooled strictly before it."""
        included = [tx for tx in self.pool if tx.arrival_ms < gst_ms]
        self.pool = [tx for tx in self.pool if tx.arrival_ms >= gst_ms]
        block_time = self.params.block_time.sample(rng)
        assert 0 < block_time <= self.params.sync_period_ms
        return Block(
            depth=len(self.blocks) + 1,
            gst_ms=gst_ms,
            commit_ms=gst_ms + block_time,
            txs=tuple(included),
        )

    def commit_block(self, block: Block) -> None:
        """Apply a produced block at its commit time to every node's view."""
        assert block.depth == len(self.blocks) + 1, "blocks commit in depth order"
        self.blocks.append(block)
        correct = self.params.node_count - self.params.byzantine_count
        for i in range(self.params.node_count):
            # Byzantine tail nodes diverge: they silently skip odd depths.
            if i >= correct and block.depth % 2 == 1:
                continue
            self.node_ledgers[i].append(block)
        for tx in block.txs:
            if tx.kind == "record":
                self.commit_times[(tx.device_id, tx.t_ms)] = block.commit_ms

    @property
    def pool_empty(self) -> bool:
        return not self.pool

    # -- reads --

    def node_view(self, index: int) -> tuple[Block, ...]:
        return tuple(self.node_ledgers[index])

    def correct_views(self) -> list[tuple[Block, ...]]:
        correct = self.params.node_count - self.params.byzantine_count
        return [self.node_view(i) for i in range(correct)]

    def query_entity(self, device_id: str) -> DigitalEntity:
        """The device's committed history, read from the correct majority."""
        views = self.correct_views()
        assert all(v == views[0] for v in views[1:]), \
            "correct nodes disagree -- ledger corruption"
        records = [
            (tx.payload, block.commit_ms)
            for block in views[0]
            for tx in block.txs
            if tx.kind == "record" and tx.device_id == device_id
        ]
        return DigitalEntity(device_id=device_id, records=tuple(records))

    def query_alarms(self, device_id: str) -> list[tuple[AlarmMessage, float]]:
        views = self.correct_views()
        return [
            (tx.payload, block.commit_ms)
            for block in views[0]
            for tx in block.txs
            if tx.kind == "alarm" and tx.device_id == device_id
        ]


# --- ledger file export / import ------------------------------------------------------

LEDGER_MAGIC = "# coldtrace-ledger v1"


def export_ledger(chain: Chain, device_id: str) -> str:
    """Serialize the committed history as tab-separated text.

    One committed transaction per line; floats via ``repr`` so the bytes are
    exact and reproducible.  The header carries what an auditor needs to
    rebuild and verify the entity without the original run.
    """
    lines = [
        LEDGER_MAGIC,
        f"# device={device_id} public_key={chain.device_public_key.hex()}",
        "# record columns: depth gst_ms commit_ms kind device_id t_ms bright temp_c lat lon sig",
        "# alarm  columns: depth gst_ms commit_ms kind device_id t_ms messages sig",
    ]
    for block in chain.blocks:
        for tx in block.txs:
            base = [str(block.depth), repr(block.gst_ms), repr(block.commit_ms),
                    tx.kind, tx.device_id, str(tx.t_ms)]
            if tx.kind == "record":
                r = tx.payload.reading
                row = base + [str(r.bright), repr(r.temp_c), repr(r.lat), repr(r.lon),
                              tx.payload.sig.hex()]
            else:
                row = base + ["|".join(tx.payload.messages), tx.payload.sig.hex()]
            lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


@dataclass
class LedgerRow:
    depth: int
    gst_ms: float
    commit_ms: float
    kind: str
    device_id: str
    t_ms: int
    record: Record | None = None
    alarm: AlarmMessage | None = None


@dataclass
class LedgerFile:
    device_id: str
    public_key: bytes
    rows: list[LedgerRow] = field(default_factory=list)

    def entity(self, device_id: str | None = None) -> DigitalEntity:
        wanted = self.device_id if device_id is None else device_id
        return DigitalEntity(
            device_id=wanted,
            records=tuple(
                (row.record, row.commit_ms)
                for row in self.rows
                if row.kind == "record" and row.device_id == wanted
            ),
        )


def parse_ledger(text: str) -> LedgerFile:
    """Parse :func:`export_ledger` output; raises DecodeError on damage."""
    lines = text.splitlines()
    if not lines or lines[0] != LEDGER_MAGIC:
        raise DecodeError("not a ledger file (missing magic header)")
    meta: dict[str, str] = {}
    rows: list[LedgerRow] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("#"):
            for part in line[1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k] = v
            continue
        cols = line.split("\t")
        try:
            depth, gst_ms, commit_ms, kind, device_id, t_ms = (
                int(cols[0]), float(cols[1]), float(cols[2]),
                cols[3], cols[4], int(cols[5]),
            )
            if kind == "record":
                bright, temp_c, lat, lon, sig = (
                    int(cols[6]), float(cols[7]), float(cols[8]), float(cols[9]),
                    bytes.fromhex(cols[10]),
                )
                row = LedgerRow(
                    depth=depth, gst_ms=gst_ms, commit_ms=commit_ms, kind=kind,
                    device_id=device_id, t_ms=t_ms,
                    record=Record(
                        t_ms=t_ms,
                        reading=SensorReading(bright=bright, temp_c=temp_c, lat=lat, lon=lon),
                        sig=sig,
                    ),
                )
            elif kind == "alarm":
                row = LedgerRow(
                    depth=depth, gst_ms=gst_ms, commit_ms=commit_ms, kind=kind,
                    device_id=device_id, t_ms=t_ms,
                    alarm=AlarmMessage(
                        t_ms=t_ms,
                        messages=tuple(cols[6].split("|")),
                        sig=bytes.fromhex(cols[7]),
                    ),
                )
            else:
                raise ValueError(f"unknown kind {kind!r}")
        except (ValueError, IndexError) as exc:
            raise DecodeError(f"bad ledger line {line!r}: {exc}") from exc
        rows.append(row)
    if "device" not in meta or "public_key" not in meta:
        raise DecodeError("ledger header missing device/public_key")
    return LedgerFile(
        device_id=meta["device"],
        public_key=bytes.fromhex(meta["public_key"]),
        rows=rows,
    )

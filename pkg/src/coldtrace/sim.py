"""Deterministic discrete-event simulator tying device, channel, and chain.

One virtual clock drives everything.  Events at equal times resolve in a
fixed priority order (GST, then block commits, then message deliveries, then
ACK deliveries, then sense ticks) with scheduling order as the final
tie-break, so a seed and a configuration fully determine every byte of the
outputs.  All randomness flows from the single run seed through per-module
substreams (device, channel, chain, crypto).
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from random import Random

from . import crypto
from .chain import Chain, ChainParams, Ack, export_ledger
from .core import DigitalEntity, Record, SensorReading, UploadMessage
from .device import Device, DeviceConfig, RecoveryOverflow
from .environment import Scenario
from .network import Channel, ChannelConfig, Delivered
from .verifier import TimingParams


class ConfigError(ValueError):
    """Inconsistent or impossible run configuration."""


# Priorities for same-instant events; lower runs first.
_PRIO = {"gst": 0, "bct": 1, "delivery": 2, "alarm_delivery": 2, "ack": 3, "sense": 4}


def _substream(seed: int, label: str) -> Random:
    digest = hashlib.sha256(f"coldtrace/{seed}/{label}".encode()).digest()
    return Random(int.from_bytes(digest[:8], "big"))


@dataclass
class Trace:
    """Everything one run produced: config snapshot, event log, outcomes."""

    seed: int
    config: dict
    events: list[dict] = field(default_factory=list)
    entity: DigitalEntity | None = None
    alarms_committed: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    end_ms: float = 0.0
    ledger_text: str | None = None

    @property
    def device_id(self) -> str:
        return self.config["device"]["device_id"]

    @property
    def device_public_key(self) -> bytes:
        return bytes.fromhex(self.config["device"]["public_key"])

    def timing_params(self) -> TimingParams | None:
        spec = self.config.get("audit")
        return TimingParams(**spec) if spec else None

    def recovered_ts(self) -> set[int]:
        """Device timestamps that ever sat in the backup queue."""
        out: set[int] = set()
        for ev in self.events:
            if ev["ev"] == "requeue":
                out.update(ev["records"])
        return out

    def to_jsonl(self) -> str:
        lines = [json.dumps({"ev": "meta", "seed": self.seed, "config": self.config},
                            sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(ev, sort_keys=True, separators=(",", ":"))
                  for ev in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValueError("empty trace file")
        meta = json.loads(lines[0])
        if meta.get("ev") != "meta":
            raise ValueError("trace file must start with a meta line")
        trace = cls(seed=meta["seed"], config=meta["config"])
        trace.events = [json.loads(line) for line in lines[1:]]

        readings: dict[int, Record] = {}
        committed: list[tuple[Record, float]] = []
        for ev in trace.events:
            if ev["ev"] == "sense":
                readings[ev["t"]] = Record(
                    t_ms=ev["t"],
                    reading=SensorReading(bright=ev["bright"], temp_c=ev["temp_c"],
                                          lat=ev["lat"], lon=ev["lon"]),
                    sig=bytes.fromhex(ev["sig"]),
                )
            elif ev["ev"] == "commit":
                for t in ev["records"]:
                    committed.append((readings[t], ev["ms"]))
            elif ev["ev"] == "end":
                trace.summary = {k: v for k, v in ev.items() if k not in ("ev", "ms")}
                trace.end_ms = ev["ms"]
        trace.entity = DigitalEntity(device_id=trace.device_id,
                                     records=tuple(committed))
        return trace


def run(scenario: Scenario, device_cfg: DeviceConfig, channel_cfg: ChannelConfig,
        chain_params: ChainParams, seed: int,
        audit_params: TimingParams | None = None) -> Trace:
    """Simulate one shipment end to end; returns the full Trace.

    Identical (scenario, configs, seed) always reproduce identical traces.
    """
    if device_cfg.first_sense_ms > scenario.duration_ms:
        raise ConfigError("first sense tick lies beyond the scenario duration")

    device_rng = _substream(seed, "device")
    channel_rng = _substream(seed, "channel")
    chain_rng = _substream(seed, "chain")
    crypto_rng = _substream(seed, "crypto")

    # Key establishment happens before the clock starts: the device derives
    # the upload key, wraps it for the agent, and the agent unwraps+verifies.
    probe = crypto.keygen(device_cfg.key_seed)
    agent_keys = crypto.agent_keygen(crypto_rng.randbytes(32))
    dev_session, distribution, dist_sig = crypto.session_key(
        probe, agent_keys.identity, crypto_rng)
    agent_session = crypto.open_session(agent_keys, distribution, dist_sig,
                                        probe.public_key)
    assert agent_session.key == dev_session.key

    device = Device(device_cfg, dev_session, device_rng)
    channel = Channel(cfg=channel_cfg, rng=channel_rng)
    chain = Chain(chain_params, agent_session, device.public_key,
                  max_records_per_upload=device_cfg.max_backlog + 1)

    config_snapshot = {
        "scenario": scenario.to_spec(),
        "device": {**device_cfg.to_spec(), "public_key": device.public_key.hex()},
        "channel": channel_cfg.to_spec(),
        "chain": chain_params.to_spec(),
        "audit": audit_params.to_spec() if audit_params else None,
    }
    trace = Trace(seed=seed, config=config_snapshot)

    heap: list[tuple[float, int, int, str, tuple]] = []
    seq = 0

    def sched(time_ms: float, kind: str, *payload) -> None:
        nonlocal seq
        heapq.heappush(heap, (time_ms, _PRIO[kind], seq, kind, payload))
        seq += 1

    def emit(ev: str, ms: float, **fields) -> None:
        trace.events.append({"ev": ev, "ms": ms, **fields})

    pending_transport = 0    # deliveries/acks currently in flight
    pending_sense = 0        # 0 or 1 scheduled sense ticks
    device_failed = False
    seen_nonces: set[bytes] = set()
    uploads_in_flight: dict[int, UploadMessage] = {}

    def sensing_done() -> bool:
        return device_failed or pending_sense == 0

    # --- handlers --------------------------------------------------------------

    def on_sense(now: float, tick: int) -> None:
        nonlocal pending_transport, pending_sense, device_failed
        pending_sense -= 1
        try:
            outcome = device.sense_cycle(tick, scenario)
        except RecoveryOverflow as exc:
            device_failed = True
            emit("failed", now, reason=str(exc))
            return
        if outcome.requeued:
            emit("requeue", now, records=[r.t_ms for r in outcome.requeued])
        r = outcome.record
        emit("sense", now, t=r.t_ms, bright=r.reading.bright, temp_c=r.reading.temp_c,
             lat=r.reading.lat, lon=r.reading.lon, sig=r.sig.hex())

        if outcome.alarm is not None:
            emit("alarm", now, t=outcome.alarm.t_ms,
                 messages=list(outcome.alarm.messages), sig=outcome.alarm.sig.hex())
            fate = channel.transmit(outcome.ready_ms)
            if isinstance(fate, Delivered):
                sched(fate.arrival_ms, "alarm_delivery", outcome.alarm)
                pending_transport += 1
            else:
                emit("drop", outcome.ready_ms, kind="alarm", t=outcome.alarm.t_ms,
                     reason=fate.reason)

        upload = outcome.upload
        nonce = upload.ciphertext[: crypto.NONCE_LEN]
        assert nonce not in seen_nonces, "seal nonce reused within a run"
        seen_nonces.add(nonce)
        digest = hashlib.sha256(upload.ciphertext).hexdigest()[:8]
        emit("send", outcome.ready_ms, msg=upload.msg_id,
             records=[rec.t_ms for rec in outcome.batch], fresh=r.t_ms, ct=digest)
        fate = channel.transmit(outcome.ready_ms)
        if isinstance(fate, Delivered):
            uploads_in_flight[upload.msg_id] = upload
            sched(fate.arrival_ms, "delivery", upload)
            pending_transport += 1
        else:
            emit("drop", outcome.ready_ms, kind="upload", msg=upload.msg_id,
                 reason=fate.reason)

        next_tick = tick + device_cfg.sense_interval_ms
        if next_tick <= scenario.duration_ms:
            sched(next_tick, "sense", next_tick)
            pending_sense += 1

    def on_delivery(now: float, upload: UploadMessage) -> None:
        nonlocal pending_transport
        pending_transport -= 1
        uploads_in_flight.pop(upload.msg_id, None)
        result = chain.receive_upload(upload, now)
        if isinstance(result.verdict, Ack):
            emit("arrive", now, msg=upload.msg_id, verdict="ack",
                 pooled=list(result.pooled_ts), dup=list(result.duplicate_ts))
            fate = channel.transmit(now)
            if isinstance(fate, Delivered):
                sched(fate.arrival_ms, "ack", upload.msg_id)
                pending_transport += 1
            else:
                emit("drop", now, kind="ack", msg=upload.msg_id, reason=fate.reason)
        else:
            emit("arrive", now, msg=upload.msg_id, verdict="reject",
                 reason=result.verdict.reason)

    def on_alarm_delivery(now: float, alarm) -> None:
        nonlocal pending_transport
        pending_transport -= 1
        ok = chain.receive_alarm(device_cfg.device_id, alarm, now)
        emit("alarm_arrive", now, t=alarm.t_ms, accepted=ok)

    def on_ack(now: float, msg_id: int) -> None:
        nonlocal pending_transport
        pending_transport -= 1
        device.handle_ack(msg_id)
        emit("ack", now, msg=msg_id)

    def on_gst(now: float) -> None:
        block = chain.produce_block(now, chain_rng)
        emit("gst", now, depth=block.depth)
        sched(block.commit_ms, "bct", block)
        if not (sensing_done() and chain.pool_empty and pending_transport == 0):
            sched(chain.next_gst(chain_rng), "gst")

    def on_bct(now: float, block) -> None:
        chain.commit_block(block)
        worst_wait = chain.params.gst_gap.max_gap + chain.params.sync_period_ms
        for tx in block.txs:
            wait = block.commit_ms - tx.arrival_ms
            assert 0 < wait <= worst_wait, "commit wait outside model bounds"
        emit("commit", now, depth=block.depth, gst=block.gst_ms,
             records=[tx.t_ms for tx in block.txs if tx.kind == "record"],
             alarms=[tx.t_ms for tx in block.txs if tx.kind == "alarm"])

    # --- main loop -------------------------------------------------------------

    if device_cfg.first_sense_ms <= scenario.duration_ms:
        sched(device_cfg.first_sense_ms, "sense", device_cfg.first_sense_ms)
        pending_sense += 1
    sched(chain.next_gst(chain_rng), "gst")

    last_time = 0.0
    while heap:
        time_ms, _prio, _seq, kind, payload = heapq.heappop(heap)
        assert time_ms >= last_time, "virtual time must be non-decreasing"
        last_time = time_ms
        if kind == "sense":
            on_sense(time_ms, *payload)
        elif kind == "delivery":
            on_delivery(time_ms, *payload)
        elif kind == "alarm_delivery":
            on_alarm_delivery(time_ms, *payload)
        elif kind == "ack":
            on_ack(time_ms, *payload)
        elif kind == "gst":
            on_gst(time_ms)
        elif kind == "bct":
            on_bct(time_ms, *payload)

    entity = chain.query_entity(device_cfg.device_id)
    trace.entity = entity
    trace.alarms_committed = chain.query_alarms(device_cfg.device_id)
    trace.end_ms = last_time
    trace.ledger_text = export_ledger(chain, device_cfg.device_id)

    sensed = sum(1 for ev in trace.events if ev["ev"] == "sense")
    alarms = sum(1 for ev in trace.events if ev["ev"] == "alarm")
    committed_ts = {rec.t_ms for rec, _ in entity.records}
    recovered = len(trace.recovered_ts() & committed_ts)
    summary = {
        "sensed": sensed,
        "committed": len(entity),
        "recovered": recovered,
        "alarms": alarms,
        "alarms_committed": len(trace.alarms_committed),
        "blocks": len(chain.blocks),
        "status": device.status if not device_failed else "failed",
        "failure_reason": device.failure_reason,
    }
    trace.summary = summary
    trace.events.append({"ev": "end", "ms": last_time, **summary})
    return trace


def summary_line(trace: Trace) -> str:
    s = trace.summary
    line = (f"{s['sensed']} sensed, {s['committed']} committed, "
            f"{s['recovered']} recovered, {s['alarms']} alarms")
    if s["status"] != "running":
        line += f" -- device FAILED: {s['failure_reason']}"
    return line

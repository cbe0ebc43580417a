"""coldtrace: deterministic cold-chain sensing simulation and trust auditing.

A sensing device rides along a refrigerated shipment, signs every reading,
and uploads sealed batches to a small BFT chain over a lossy channel.  The
owner later audits the committed history for truthfulness (signatures),
consistency (availability within a closed-form worst-case bound), and
continuity (no unexcused reporting gaps).  Everything is driven by a single
seed, so runs are reproducible byte for byte.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .chain import Chain, ChainParams, GstGap, export_ledger, parse_ledger
from .config import RunSetup, load_setup, setup_from_mapping
from .core import (
    AlarmMessage,
    Checkpoint,
    DecodeError,
    DigitalEntity,
    EncodingError,
    Pattern,
    Record,
    SensorReading,
    UploadMessage,
    canonical_decode,
    canonical_encode,
)
from .device import Device, DeviceConfig, RecoveryOverflow, dist_meters, violation_check
from .environment import Scenario, ground_truth, sample_sensors
from .network import Channel, ChannelConfig
from .samplers import Sampler
from .sim import ConfigError, Trace, run, summary_line
from .verifier import (
    AuditError,
    AuditReport,
    TimingParams,
    audit,
    availability_bound,
    commit_gap_bound,
    latency_stats,
    render_report,
    render_stats,
)

__all__ = [
    "__version__",
    "AlarmMessage", "AuditError", "AuditReport", "Chain", "ChainParams",
    "Channel", "ChannelConfig", "Checkpoint", "ConfigError", "DecodeError",
    "Device", "DeviceConfig", "DigitalEntity", "EncodingError", "GstGap",
    "Pattern", "Record", "RecoveryOverflow", "RunSetup", "Sampler", "Scenario",
    "SensorReading", "TimingParams", "Trace", "UploadMessage",
    "audit", "availability_bound", "canonical_decode", "canonical_encode",
    "commit_gap_bound", "dist_meters", "export_ledger", "ground_truth",
    "latency_stats", "load_setup", "parse_ledger", "render_report",
    "render_stats", "run", "sample_sensors", "setup_from_mapping",
    "summary_line", "violation_check",
]

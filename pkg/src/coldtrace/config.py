"""YAML configuration loading: one file describes a complete run.

A run file has top-level sections ``scenario``, ``device``, ``pattern``,
``channel``, ``chain``, and optionally ``audit``.  A second file passed as an
overlay is deep-merged on top (mapping keys override recursively, everything
else replaces).  Worst-case audit parameters default to the configured
samplers' upper bounds, so the ``audit`` section only needs entries that
differ from the deployment's own worst case.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import samplers
from .chain import ChainParams, GstGap
from .core import Checkpoint, Pattern
from .device import DeviceConfig
from .environment import Scenario, ScenarioError, scenario_from_spec
from .network import ChannelConfig
from .sim import ConfigError, Trace
from .verifier import TimingParams
from . import sim


@dataclass(frozen=True)
class RunSetup:
    """Everything sim.run needs, parsed and validated."""

    scenario: Scenario
    device: DeviceConfig
    channel: ChannelConfig
    chain: ChainParams
    audit: TimingParams
    name: str = "run"

    def run(self, seed: int) -> Trace:
        return sim.run(self.scenario, self.device, self.channel, self.chain,
                       seed, audit_params=self.audit)


def deep_merge(base: dict, overlay: dict) -> dict:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def default_key_seed(device_id: str) -> bytes:
    return hashlib.sha256(f"coldtrace-device:{device_id}".encode()).digest()


def _pattern_from_spec(spec: dict) -> Pattern:
    return Pattern(
        allowed_brightness=frozenset(int(b) for b in spec.get("allowed_brightness", (0,))),
        temp_range_c=tuple(float(v) for v in spec.get("temp_range_c", (13.0, 15.0))),
        checkpoints=tuple(
            Checkpoint(lat=float(cp["lat"]), lon=float(cp["lon"]),
                       radius_m=float(cp["radius_m"]))
            for cp in spec.get("checkpoints", ())
        ),
    )


def _gst_gap_from_spec(spec) -> GstGap:
    if isinstance(spec, (int, float)):
        return GstGap(mode="constant", value=float(spec))
    mode = spec.get("mode", "constant")
    if mode == "constant":
        return GstGap(mode="constant", value=float(spec["value"]))
    if mode == "bounded":
        return GstGap(mode="bounded", bound=float(spec["bound"]),
                      sampler=samplers.from_spec(spec["sampler"]))
    raise ConfigError(f"unknown gst gap mode {mode!r}")


def setup_from_mapping(raw: dict, name: str = "run") -> RunSetup:
    """Build a validated RunSetup from a parsed YAML mapping."""
    try:
        missing = [k for k in ("scenario", "device", "channel", "chain") if k not in raw]
        if missing:
            raise ConfigError(f"missing config sections: {', '.join(missing)}")

        scenario = scenario_from_spec(raw["scenario"], name=name)

        dev = raw["device"]
        seed_hex = dev.get("key_seed_hex")
        key_seed = (bytes.fromhex(seed_hex) if seed_hex
                    else default_key_seed(dev["device_id"]))
        device = DeviceConfig(
            device_id=str(dev["device_id"]),
            key_seed=key_seed,
            sense_interval_ms=int(dev.get("sense_interval_ms", 10000)),
            first_sense_ms=(int(dev["first_sense_ms"])
                            if "first_sense_ms" in dev else None),
            max_backlog=int(dev.get("max_backlog", 5)),
            clock_skew_ms=int(dev.get("clock_skew_ms", 0)),
            sense_delay=samplers.from_spec(dev.get("sense_delay_ms", 84.0)),
            pattern=_pattern_from_spec(raw.get("pattern", {})),
        )

        ch = raw["channel"]
        channel = ChannelConfig(
            latency=samplers.from_spec(ch.get("latency_ms", 76.3)),
            jam_windows_ms=tuple(tuple(w) for w in ch.get("jam_windows_ms", ())),
            loss_rate=float(ch.get("loss_rate", 0.0)),
        )

        bc = raw["chain"]
        chain = ChainParams(
            node_count=int(bc.get("node_count", 6)),
            byzantine_count=int(bc.get("byzantine_count", 1)),
            gst_gap=_gst_gap_from_spec(bc.get("gst_gap_ms", 100.0)),
            sync_period_ms=float(bc.get("sync_period_ms", 50.0)),
            block_time=samplers.from_spec(bc.get("block_time_ms", 14.15)),
        )

        audit_spec = raw.get("audit") or {}
        audit = TimingParams(
            sense_delay_max_ms=float(audit_spec.get("sense_delay_max_ms",
                                                    device.sense_delay.max)),
            net_delay_max_ms=float(audit_spec.get("net_delay_max_ms",
                                                  channel.latency.max)),
            gst_gap_max_ms=float(audit_spec.get("gst_gap_max_ms",
                                                chain.gst_gap.max_gap)),
            sync_period_ms=float(audit_spec.get("sync_period_ms",
                                                chain.sync_period_ms)),
            sense_interval_ms=int(audit_spec.get("sense_interval_ms",
                                                 device.sense_interval_ms)),
            max_backlog=int(audit_spec.get("max_backlog", device.max_backlog)),
            clock_skew_abs_ms=float(audit_spec.get("clock_skew_abs_ms",
                                                   abs(device.clock_skew_ms))),
        )
    except ConfigError:
        raise
    except ScenarioError as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc

    return RunSetup(scenario=scenario, device=device, channel=channel,
                    chain=chain, audit=audit, name=name)


def load_setup(path: str | Path, overlay_path: str | Path | None = None) -> RunSetup:
    """Load a run file (plus optional overlay) into a RunSetup."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} does not contain a configuration mapping")
    if overlay_path is not None:
        overlay_path = Path(overlay_path)
        try:
            overlay = yaml.safe_load(overlay_path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read {overlay_path}: {exc}") from exc
        if not isinstance(overlay, dict):
            raise ConfigError(f"{overlay_path} does not contain a configuration mapping")
        raw = deep_merge(raw, overlay)
    return setup_from_mapping(raw, name=path.stem)


def timing_params_from_file(path: str | Path) -> TimingParams:
    """Read audit bounds from a YAML file (bare keys or an ``audit:`` section)."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if isinstance(raw, dict) and isinstance(raw.get("audit"), dict):
        raw = raw["audit"]
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} does not contain audit parameters")
    try:
        return TimingParams(
            sense_delay_max_ms=float(raw["sense_delay_max_ms"]),
            net_delay_max_ms=float(raw["net_delay_max_ms"]),
            gst_gap_max_ms=float(raw["gst_gap_max_ms"]),
            sync_period_ms=float(raw["sync_period_ms"]),
            sense_interval_ms=int(raw["sense_interval_ms"]),
            max_backlog=int(raw["max_backlog"]),
            clock_skew_abs_ms=float(raw.get("clock_skew_abs_ms", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad audit parameters: {exc}") from exc

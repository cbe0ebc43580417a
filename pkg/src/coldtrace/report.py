"""Run reporting: delimited series files plus rendered figures.

Every series is written as a CSV next to the figures so the numbers behind
each plot stay inspectable.  Reading series (temperature, brightness, gps)
come from the device's sense log; the latency series comes from the committed
history, decomposed into the three pipeline legs.  Records that rode the
backup queue are flagged in every series.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .device import EARTH_RADIUS_M
from .verifier import availability_bound

SERIES = ("temperature", "brightness", "gps", "latency")


@dataclass(frozen=True)
class ReadingPoint:
    t_ms: int
    rel_s: float
    bright: int
    temp_c: float
    lat: float
    lon: float
    recovered: bool


@dataclass(frozen=True)
class LatencyPoint:
    t_ms: int
    rel_s: float
    sense_delay_ms: float | None
    net_delay_ms: float | None
    commit_delay_ms: float | None
    slack_ms: float
    recovered: bool


def reading_points(trace) -> list[ReadingPoint]:
    """One point per sensed record, in sensing order."""
    recovered = trace.recovered_ts()
    points = []
    first_t: int | None = None
    for ev in trace.events:
        if ev["ev"] != "sense":
            continue
        if first_t is None:
            first_t = ev["t"]
        points.append(ReadingPoint(
            t_ms=ev["t"],
            rel_s=(ev["t"] - first_t) / 1000.0,
            bright=ev["bright"],
            temp_c=ev["temp_c"],
            lat=ev["lat"],
            lon=ev["lon"],
            recovered=ev["t"] in recovered,
        ))
    if not points:
        raise ValueError("trace contains no sensed records")
    return points


def latency_points(trace) -> list[LatencyPoint]:
    """One point per committed record, in device-timestamp order.

    Per-leg delays are only present for records that went out fresh and were
    acknowledged; backlog records only have their overall slack.
    """
    sense_ms: dict[int, float] = {}
    send_by_fresh: dict[int, dict] = {}
    arrive_by_msg: dict[int, float] = {}
    commit_ms: dict[int, float] = {}
    recovered: set[int] = set()
    for ev in trace.events:
        kind = ev["ev"]
        if kind == "sense":
            sense_ms[ev["t"]] = ev["ms"]
        elif kind == "send":
            send_by_fresh.setdefault(ev["fresh"], ev)
        elif kind == "arrive" and ev["verdict"] == "ack":
            arrive_by_msg.setdefault(ev["msg"], ev["ms"])
        elif kind == "commit":
            for t in ev["records"]:
                commit_ms.setdefault(t, ev["ms"])
        elif kind == "requeue":
            recovered.update(ev["records"])

    if not commit_ms:
        raise ValueError("trace contains no committed records")
    first_t = min(commit_ms)
    points = []
    for t in sorted(commit_ms):
        send = send_by_fresh.get(t)
        legs = (None, None, None)
        if t not in recovered and send is not None and send["msg"] in arrive_by_msg:
            arrive = arrive_by_msg[send["msg"]]
            legs = (send["ms"] - sense_ms[t], arrive - send["ms"],
                    commit_ms[t] - arrive)
        points.append(LatencyPoint(
            t_ms=t,
            rel_s=(t - first_t) / 1000.0,
            sense_delay_ms=legs[0],
            net_delay_ms=legs[1],
            commit_delay_ms=legs[2],
            slack_ms=commit_ms[t] - t,
            recovered=t in recovered,
        ))
    return points


# --- delimited output -----------------------------------------------------------------

_READING_COLUMNS = {
    "temperature": ("temp_c",),
    "brightness": ("bright",),
    "gps": ("lat", "lon"),
}


def write_csv(trace, series: str, path: Path) -> Path:
    """Write one series as CSV; returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if series == "latency":
            writer.writerow(["rel_time_s", "t_ms", "sense_delay_ms", "net_delay_ms",
                             "commit_delay_ms", "slack_ms", "recovered"])
            for p in latency_points(trace):
                writer.writerow([
                    p.rel_s, p.t_ms,
                    "" if p.sense_delay_ms is None else p.sense_delay_ms,
                    "" if p.net_delay_ms is None else p.net_delay_ms,
                    "" if p.commit_delay_ms is None else p.commit_delay_ms,
                    p.slack_ms, int(p.recovered),
                ])
        elif series in _READING_COLUMNS:
            cols = _READING_COLUMNS[series]
            writer.writerow(["rel_time_s", "t_ms", *cols, "recovered"])
            for p in reading_points(trace):
                writer.writerow([p.rel_s, p.t_ms,
                                 *(getattr(p, c) for c in cols), int(p.recovered)])
        else:
            raise ValueError(f"unknown series {series!r}")
    return path


# --- figures --------------------------------------------------------------------------

def _split_recovered(points):
    fresh = [p for p in points if not p.recovered]
    backlog = [p for p in points if p.recovered]
    return fresh, backlog


def _checkpoint_outline(lat: float, lon: float, radius_m: float):
    """Boundary of a ground circle, in degrees, for plotting."""
    dlat = math.degrees(radius_m / EARTH_RADIUS_M)
    dlon = dlat / math.cos(math.radians(lat))
    angles = [2 * math.pi * k / 90 for k in range(91)]
    return ([lon + dlon * math.cos(a) for a in angles],
            [lat + dlat * math.sin(a) for a in angles])


def render_figure(trace, series: str, path: Path) -> Path:
    """Render one series to a PNG; returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    try:
        if series == "temperature":
            points = reading_points(trace)
            lo, hi = trace.config["device"]["pattern"]["temp_range_c"]
            ax.axhspan(lo, hi, color="tab:green", alpha=0.15, label="allowed range")
            ax.plot([p.rel_s for p in points], [p.temp_c for p in points],
                    color="tab:blue", lw=1.2, label="temperature")
            _, backlog = _split_recovered(points)
            if backlog:
                ax.scatter([p.rel_s for p in backlog], [p.temp_c for p in backlog],
                           color="tab:orange", zorder=3, s=18, label="recovered")
            ax.set_xlabel("time since first reading (s)")
            ax.set_ylabel("temperature (C)")
        elif series == "brightness":
            points = reading_points(trace)
            ax.step([p.rel_s for p in points], [p.bright for p in points],
                    where="post", color="tab:blue", label="bright")
            _, backlog = _split_recovered(points)
            if backlog:
                ax.scatter([p.rel_s for p in backlog], [p.bright for p in backlog],
                           color="tab:orange", zorder=3, s=18, label="recovered")
            ax.set_yticks([0, 1])
            ax.set_xlabel("time since first reading (s)")
            ax.set_ylabel("brightness flag")
        elif series == "gps":
            points = reading_points(trace)
            for cp in trace.config["device"]["pattern"]["checkpoints"]:
                xs, ys = _checkpoint_outline(cp["lat"], cp["lon"], cp["radius_m"])
                ax.plot(xs, ys, color="tab:green", lw=0.8, alpha=0.7)
            ax.plot([p.lon for p in points], [p.lat for p in points],
                    color="tab:blue", lw=1.0, marker=".", ms=3, label="track")
            _, backlog = _split_recovered(points)
            if backlog:
                ax.scatter([p.lon for p in backlog], [p.lat for p in backlog],
                           color="tab:orange", zorder=3, s=18, label="recovered")
            ax.set_xlabel("longitude (deg)")
            ax.set_ylabel("latitude (deg)")
            ax.set_aspect("equal", adjustable="datalim")
        elif series == "latency":
            points = latency_points(trace)
            ax.plot([p.rel_s for p in points], [p.slack_ms for p in points],
                    color="tab:blue", lw=1.0, marker=".", ms=3,
                    label="event-to-commit slack")
            _, backlog = _split_recovered(points)
            if backlog:
                ax.scatter([p.rel_s for p in backlog], [p.slack_ms for p in backlog],
                           color="tab:orange", zorder=3, s=18, label="recovered")
            params = trace.timing_params()
            if params is not None:
                ax.axhline(availability_bound(params), color="tab:red", ls="--",
                           lw=1.0, label="availability bound")
            ax.set_xlabel("device timestamp since first commit (s)")
            ax.set_ylabel("commit time - device time (ms)")
            ax.set_yscale("log")
        else:
            raise ValueError(f"unknown series {series!r}")
        ax.set_title(f"{trace.device_id}: {series}")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)
    return path


def write_report(trace, out_dir: Path, series=SERIES, figures: bool = True) -> list[Path]:
    """Write the selected series (CSV, and optionally PNG) into out_dir."""
    out_dir = Path(out_dir)
    written = []
    for name in series:
        written.append(write_csv(trace, name, out_dir / f"{name}.csv"))
        if figures:
            written.append(render_figure(trace, name, out_dir / f"{name}.png"))
    return written

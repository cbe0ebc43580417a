"""Report series extraction, CSV output, and figure rendering."""

from __future__ import annotations

import csv
from types import SimpleNamespace

import pytest

from coldtrace import report

RECOVERED_TS = {200000, 210000, 220000, 630000, 640000, 650000, 660000}


# --- series extraction ------------------------------------------------------------

def test_reading_points_cover_every_sensed_record(shipment_trace):
    points = report.reading_points(shipment_trace)
    assert [p.t_ms for p in points] == list(range(10000, 930000, 10000))
    assert {p.t_ms for p in points if p.recovered} == RECOVERED_TS
    assert points[0].rel_s == 0.0
    assert points[1].rel_s == 10.0


def test_reading_point_values_match_environment(shipment_trace):
    by_t = {p.t_ms: p for p in report.reading_points(shipment_trace)}
    assert by_t[590000].bright == 0
    assert by_t[600000].bright == 1          # lid opens exactly at 600 s
    assert by_t[600000].temp_c == 14.0
    assert by_t[620000].temp_c == 16.0       # 1/5 into the 14->24 warm-up
    assert by_t[400000].lat == pytest.approx(36.66)
    assert by_t[400000].lon == pytest.approx(117.018)


def test_latency_points_split_fresh_and_backlog(shipment_trace):
    points = report.latency_points(shipment_trace)
    assert len(points) == 92
    assert [p.t_ms for p in points] == sorted(p.t_ms for p in points)

    backlog = {p.t_ms for p in points if p.recovered}
    assert backlog == RECOVERED_TS
    for p in points:
        legs = (p.sense_delay_ms, p.net_delay_ms, p.commit_delay_ms)
        if p.recovered:
            assert legs == (None, None, None)
        else:
            assert legs == (84.0, pytest.approx(76.3), pytest.approx(53.85))
            assert p.slack_ms == pytest.approx(214.15)

    by_t = {p.t_ms: p for p in points}
    # Jammed uploads commit with the batch that finally got through (at 230 s
    # and 670 s); records that only lost their ACK had already committed fresh.
    assert by_t[210000].slack_ms == pytest.approx(20214.15)
    assert by_t[220000].slack_ms == pytest.approx(10214.15)
    assert by_t[200000].slack_ms == pytest.approx(214.15)
    assert by_t[630000].slack_ms == pytest.approx(214.15)


def test_empty_traces_are_rejected():
    hollow = SimpleNamespace(events=[], recovered_ts=lambda: set())
    with pytest.raises(ValueError, match="no sensed"):
        report.reading_points(hollow)
    with pytest.raises(ValueError, match="no committed"):
        report.latency_points(hollow)


# --- delimited output -------------------------------------------------------------

def test_write_csv_reading_series(shipment_trace, tmp_path):
    path = report.write_csv(shipment_trace, "temperature", tmp_path / "t.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["rel_time_s", "t_ms", "temp_c", "recovered"]
    assert len(rows) == 1 + 92
    assert sum(int(r[-1]) for r in rows[1:]) == len(RECOVERED_TS)

    gps = list(csv.reader(report.write_csv(
        shipment_trace, "gps", tmp_path / "g.csv").open()))
    assert gps[0] == ["rel_time_s", "t_ms", "lat", "lon", "recovered"]


def test_write_csv_latency_series(shipment_trace, tmp_path):
    path = report.write_csv(shipment_trace, "latency", tmp_path / "l.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["rel_time_s", "t_ms", "sense_delay_ms", "net_delay_ms",
                       "commit_delay_ms", "slack_ms", "recovered"]
    assert len(rows) == 1 + 92
    # Backlog rows leave the leg columns empty; fresh rows fill all three.
    empties = [r for r in rows[1:] if r[2] == ""]
    assert len(empties) == len(RECOVERED_TS)
    assert all(r[3] == r[4] == "" and r[6] == "1" for r in empties)


def test_write_csv_unknown_series(shipment_trace, tmp_path):
    with pytest.raises(ValueError, match="unknown series"):
        report.write_csv(shipment_trace, "humidity", tmp_path / "h.csv")


# --- figures ----------------------------------------------------------------------

def test_render_figure_writes_png_per_series(shipment_trace, tmp_path):
    for series in report.SERIES:
        path = report.render_figure(shipment_trace, series, tmp_path / f"{series}.png")
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000


def test_render_figure_unknown_series(shipment_trace, tmp_path):
    with pytest.raises(ValueError, match="unknown series"):
        report.render_figure(shipment_trace, "humidity", tmp_path / "h.png")


def test_write_report_full_and_csv_only(shipment_trace, tmp_path):
    written = report.write_report(shipment_trace, tmp_path / "full")
    assert len(written) == 2 * len(report.SERIES)
    assert all(p.exists() for p in written)

    csv_only = report.write_report(shipment_trace, tmp_path / "flat",
                                   series=("latency",), figures=False)
    assert [p.name for p in csv_only] == ["latency.csv"]

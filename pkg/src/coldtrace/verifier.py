"""Owner-side auditing: is a device's committed history trustworthy?

Three verdicts over a committed entity, mirroring the trust definition the
whole system is built around:

* **truthfulness** -- every committed record carries a valid device signature
  over its (timestamp, reading) bytes;
* **consistency** -- no record became available later than the worst-case
  event-to-availability bound allows (recovered backlog records are exempt,
  but only when their timestamps tile the outage gap exactly);
* **continuity** -- consecutive commits are never further apart than the
  worst-case commit-gap bound, unless the gap is excused by a recovery batch.

Both bounds are closed-form worst cases: an event is available on chain within
``sense_delay_max + net_delay_max + gst_gap_max + sync_period`` (plus clock
skew slack), and consecutive commits sit within ``sense_interval + gst_gap_max
+ sync_period`` (plus skew) -- the pathological case being a record that just
misses one block production and waits out a full GST gap plus block time.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from . import crypto
from .core import DigitalEntity, encode_record_body


class AuditError(ValueError):
    """Raised when an audit cannot even start (e.g. empty entity)."""


@dataclass(frozen=True)
class TimingParams:
    """Worst-case deployment parameters the audit bounds are built from."""

    sense_delay_max_ms: float      # device-local processing, sense -> radio
    net_delay_max_ms: float        # one-way channel latency
    gst_gap_max_ms: float          # widest spacing between block productions
    sync_period_ms: float          # max block production duration
    sense_interval_ms: int         # device reporting period
    max_backlog: int               # recovery queue capacity
    clock_skew_abs_ms: float = 0.0

    def to_spec(self) -> dict:
        return {
            "sense_delay_max_ms": self.sense_delay_max_ms,
            "net_delay_max_ms": self.net_delay_max_ms,
            "gst_gap_max_ms": self.gst_gap_max_ms,
            "sync_period_ms": self.sync_period_ms,
            "sense_interval_ms": self.sense_interval_ms,
            "max_backlog": self.max_backlog,
            "clock_skew_abs_ms": self.clock_skew_abs_ms,
        }


def availability_bound(p: TimingParams) -> float:
    """Max time from a physical event to its record being readable on chain."""
    return (p.sense_delay_max_ms + p.net_delay_max_ms + p.gst_gap_max_ms
            + p.sync_period_ms + abs(p.clock_skew_abs_ms))


def commit_gap_bound(p: TimingParams) -> float:
    """Max spacing between consecutive commits of a healthy device."""
    return (p.sense_interval_ms + p.gst_gap_max_ms + p.sync_period_ms
            + abs(p.clock_skew_abs_ms))


# --- report pieces ------------------------------------------------------------------

@dataclass(frozen=True)
class TruthfulnessResult:
    ok: bool
    bad_indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class ConsistencyResult:
    ok: bool
    max_delay_ms: float            # worst T - t among checked (non-exempt) records
    bound_ms: float
    checked_count: int
    recovered_indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class GapExcuse:
    """An oversized commit gap justified by a recovery batch.

    ``index`` is the entity index of the first record of the recovering
    block; ``backlog_count`` is how many backlog records that block carried.
    """

    index: int
    gap_ms: float
    backlog_count: int


@dataclass(frozen=True)
class GapViolation:
    """An unexcused continuity break before entity index ``index``.

    ``index == len(entity)`` marks the trailing gap between the last commit
    and the audit horizon (a device that went silent).
    """

    index: int
    gap_ms: float
    reason: str


@dataclass(frozen=True)
class ContinuityResult:
    ok: bool
    max_gap_ms: float              # largest observed commit gap, excused or not
    bound_ms: float
    excused: tuple[GapExcuse, ...] = ()
    violations: tuple[GapViolation, ...] = ()


@dataclass(frozen=True)
class AuditReport:
    device_id: str
    record_count: int
    truthful: TruthfulnessResult
    consistent: ConsistencyResult
    continuous: ContinuityResult

    @property
    def trustworthy(self) -> bool:
        return self.truthful.ok and self.consistent.ok and self.continuous.ok


# --- the audit ------------------------------------------------------------------------

def _cohorts(entity: DigitalEntity) -> list[tuple[int, int]]:
    """Runs of consecutive entity indices committed at the same instant.

    Records sharing a commit time came from one block; in a healthy history a
    multi-record block is exactly a recovery batch (backlog + one fresh).
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(entity)):
        if entity.records[i][1] != entity.records[start][1]:
            spans.append((start, i))
            start = i
    spans.append((start, len(entity)))
    return spans


def audit(entity: DigitalEntity, device_public_key: bytes, p: TimingParams,
          as_of_ms: float | None = None) -> AuditReport:
    """Full trust audit of one committed entity.

    ``as_of_ms`` is the audit horizon: when given, the silence between the
    last commit and the horizon is checked like any other gap (a halted
    device is a continuity failure even though no later record exists).
    """
    n = len(entity)
    if n == 0:
        raise AuditError("cannot audit an empty entity")
    recs = entity.records
    dt = p.sense_interval_ms

    # Truthfulness: every signature verifies over the canonical body bytes.
    bad = tuple(
        i for i, (rec, _) in enumerate(recs)
        if not crypto.verify(encode_record_body(rec.t_ms, rec.reading), rec.sig,
                             device_public_key)
    )
    truthful = TruthfulnessResult(ok=not bad, bad_indices=bad)

    # Recovery inference: a same-instant cohort of k records is a recovery
    # batch whose first k-1 entries are backlog.  The batch only earns its
    # exemption if the timestamps tile the outage at exactly one interval
    # and the backlog fits the device's queue capacity.
    recovered: set[int] = set()
    excusable: dict[int, GapExcuse] = {}    # cohort start index -> excuse
    for start, end in _cohorts(entity):
        k = end - start
        if k <= 1:
            continue
        cohort_ts = [recs[i][0].t_ms for i in range(start, end)]
        tiled = all(b - a == dt for a, b in zip(cohort_ts, cohort_ts[1:]))
        if start > 0:
            tiled = tiled and (cohort_ts[0] - recs[start - 1][0].t_ms == dt)
        backlog = k - 1
        if tiled and backlog <= p.max_backlog:
            recovered.update(range(start, end - 1))
            gap = recs[start][1] - recs[start - 1][1] if start > 0 else 0.0
            excusable[start] = GapExcuse(index=start, gap_ms=gap, backlog_count=backlog)

    # Consistency: availability delay of every non-exempt record.
    avail_bound = availability_bound(p)
    checked = [i for i in range(n) if i not in recovered]
    delays = [recs[i][1] - recs[i][0].t_ms for i in checked]
    max_delay = max(delays)
    consistent = ConsistencyResult(
        ok=(max_delay <= avail_bound
            and min(delays) >= -abs(p.clock_skew_abs_ms)),
        max_delay_ms=max_delay,
        bound_ms=avail_bound,
        checked_count=len(checked),
        recovered_indices=tuple(sorted(recovered)),
    )

    # Continuity: consecutive commit gaps, plus the trailing-silence gap.
    gap_bound = commit_gap_bound(p)
    excused: list[GapExcuse] = []
    violations: list[GapViolation] = []
    max_gap = 0.0
    for i in range(1, n):
        if recs[i][0].t_ms <= recs[i - 1][0].t_ms:
            violations.append(GapViolation(
                index=i, gap_ms=0.0, reason="timestamps out of order"))
            continue
        gap = recs[i][1] - recs[i - 1][1]
        max_gap = max(max_gap, gap)
        if gap <= gap_bound:
            continue
        if i in excusable:
            excused.append(excusable[i])
        else:
            violations.append(GapViolation(
                index=i, gap_ms=gap, reason="gap exceeds bound, no recovery batch"))
    if as_of_ms is not None and n > 0:
        trailing = as_of_ms - recs[-1][1]
        if trailing > gap_bound:
            max_gap = max(max_gap, trailing)
            violations.append(GapViolation(
                index=n, gap_ms=trailing, reason="device silent at audit horizon"))
    continuous = ContinuityResult(
        ok=not violations,
        max_gap_ms=max_gap,
        bound_ms=gap_bound,
        excused=tuple(excused),
        violations=tuple(violations),
    )

    return AuditReport(
        device_id=entity.device_id,
        record_count=n,
        truthful=truthful,
        consistent=consistent,
        continuous=continuous,
    )


def render_report(report: AuditReport) -> str:
    """Human-readable audit summary, one verdict per line."""
    lines = [
        f"device:        {report.device_id}",
        f"records:       {report.record_count}",
    ]
    t = report.truthful
    if t.ok:
        lines.append("truthfulness:  PASS")
    else:
        idx = ", ".join(str(i) for i in t.bad_indices)
        lines.append(f"truthfulness:  FAIL at index {idx}")
    c = report.consistent
    verdict = "PASS" if c.ok else "FAIL"
    lines.append(
        f"consistency:   {verdict}  max availability delay {c.max_delay_ms:.3f} ms"
        f" vs bound {c.bound_ms:.3f} ms"
        f" ({c.checked_count} checked, {len(c.recovered_indices)} recovered exempt)"
    )
    g = report.continuous
    verdict = "PASS" if g.ok else "FAIL"
    lines.append(
        f"continuity:    {verdict}  max commit gap {g.max_gap_ms:.3f} ms,"
        f" bound {g.bound_ms:.3f} ms, {len(g.excused)} gap(s) excused by recovery"
    )
    for v in g.violations:
        lines.append(f"               gap violation before index {v.index}: "
                     f"{v.gap_ms:.3f} ms ({v.reason})")
    lines.append(f"verdict:       {'TRUSTWORTHY' if report.trustworthy else 'NOT TRUSTWORTHY'}")
    return "\n".join(lines)


# --- latency statistics over a run trace ---------------------------------------------

@dataclass(frozen=True)
class SeriesStats:
    count: int
    mean: float
    variance: float
    min: float
    max: float

    @classmethod
    def of(cls, values: list[float]) -> "SeriesStats":
        if not values:
            return cls(count=0, mean=0.0, variance=0.0, min=0.0, max=0.0)
        return cls(
            count=len(values),
            mean=statistics.fmean(values),
            variance=statistics.pvariance(values) if len(values) > 1 else 0.0,
            min=min(values),
            max=max(values),
        )


@dataclass(frozen=True)
class LatencyStats:
    """Latency decomposition over the fresh (non-recovered) records of a run."""

    sense_delay: SeriesStats       # radio-ready minus sense instant
    net_delay: SeriesStats         # agent arrival minus radio-ready
    commit_delay: SeriesStats      # block commit minus agent arrival
    max_slack_ms: float            # worst commit-time minus device stamp, all records
    max_slack_fresh_ms: float      # same, non-recovered records only
    recovered_count: int


def latency_stats(trace) -> LatencyStats:
    """Compute the latency decomposition from a run trace.

    Recovered records (those that ever sat in the backup queue) are excluded
    from the per-leg stats -- their delays measure the outage, not the
    pipeline -- but still feed the overall worst-case slack.
    """
    sense_ms: dict[int, float] = {}
    send_by_msg: dict[int, dict] = {}
    arrive_by_msg: dict[int, float] = {}
    commit_ms: dict[int, float] = {}
    recovered: set[int] = set()
    for ev in trace.events:
        kind = ev["ev"]
        if kind == "sense":
            sense_ms[ev["t"]] = ev["ms"]
        elif kind == "send":
            send_by_msg[ev["msg"]] = ev
        elif kind == "arrive" and ev["verdict"] == "ack":
            arrive_by_msg.setdefault(ev["msg"], ev["ms"])
        elif kind == "commit":
            for t in ev["records"]:
                commit_ms.setdefault(t, ev["ms"])
        elif kind == "requeue":
            recovered.update(ev["records"])

    sense_delays, net_delays, commit_delays = [], [], []
    slacks_all, slacks_fresh = [], []
    for msg, send in send_by_msg.items():
        fresh_t = send["fresh"]
        if fresh_t in recovered or msg not in arrive_by_msg:
            continue
        if fresh_t in sense_ms:
            sense_delays.append(send["ms"] - sense_ms[fresh_t])
        net_delays.append(arrive_by_msg[msg] - send["ms"])
        if fresh_t in commit_ms:
            commit_delays.append(commit_ms[fresh_t] - arrive_by_msg[msg])
    for t, T in commit_ms.items():
        slack = T - t
        slacks_all.append(slack)
        if t not in recovered:
            slacks_fresh.append(slack)

    return LatencyStats(
        sense_delay=SeriesStats.of(sense_delays),
        net_delay=SeriesStats.of(net_delays),
        commit_delay=SeriesStats.of(commit_delays),
        max_slack_ms=max(slacks_all) if slacks_all else 0.0,
        max_slack_fresh_ms=max(slacks_fresh) if slacks_fresh else 0.0,
        recovered_count=len(recovered & set(commit_ms)),
    )


def render_stats(stats: LatencyStats) -> str:
    def row(label: str, s: SeriesStats) -> str:
        return (f"{label:<22} n={s.count:<5} mean={s.mean:.3f} ms  "
                f"var={s.variance:.6f}  min={s.min:.3f}  max={s.max:.3f}")

    return "\n".join([
        row("local sensing delay", stats.sense_delay),
        row("transmission delay", stats.net_delay),
        row("commit delay", stats.commit_delay),
        f"{'worst event->chain':<22} {stats.max_slack_ms:.3f} ms over all records "
        f"({stats.max_slack_fresh_ms:.3f} ms excluding {stats.recovered_count} recovered)",
    ])

"""Command-line front end: run simulations, audit histories, render reports.

Three subcommands:

* ``run``    -- simulate a configured shipment, writing the event trace
  (JSON lines) and the committed ledger (TSV) plus a one-line summary;
* ``audit``  -- replay the trust audit over a trace or an exported ledger,
  printing one verdict per property (exit 0 trustworthy, 1 not, 2 malformed);
* ``stats``  -- latency decomposition plus series CSVs and figures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, config, report, sim, verifier
from .chain import LEDGER_MAGIC, parse_ledger
from .core import DecodeError


def _read_trace(path: Path) -> sim.Trace:
    return sim.Trace.from_jsonl(path.read_text())


def _cmd_run(args) -> int:
    try:
        setup = config.load_setup(args.scenario, args.config)
        trace = setup.run(args.seed)
    except (sim.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.jsonl"
    ledger_path = out_dir / "ledger.tsv"
    trace_path.write_text(trace.to_jsonl())
    ledger_path.write_text(trace.ledger_text)
    print(f"trace:  {trace_path}")
    print(f"ledger: {ledger_path}")
    print(sim.summary_line(trace))
    return 0


def _cmd_audit(args) -> int:
    path = Path(args.trace)
    try:
        head = path.read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if head.startswith(LEDGER_MAGIC):
            ledger = parse_ledger(head)
            entity = ledger.entity()
            public_key = ledger.public_key
            params = (config.timing_params_from_file(args.params)
                      if args.params else None)
            if params is None:
                print("error: auditing a ledger needs --params with the "
                      "deployment's worst-case bounds", file=sys.stderr)
                return 2
            as_of = args.as_of
        else:
            trace = sim.Trace.from_jsonl(head)
            entity = trace.entity
            public_key = trace.device_public_key
            params = (config.timing_params_from_file(args.params)
                      if args.params else trace.timing_params())
            if params is None:
                print("error: trace carries no audit bounds; pass --params",
                      file=sys.stderr)
                return 2
            as_of = args.as_of if args.as_of is not None else trace.end_ms
        audit = verifier.audit(entity, public_key, params, as_of_ms=as_of)
    except (DecodeError, verifier.AuditError, sim.ConfigError, ValueError,
            KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(verifier.render_report(audit))
    return 0 if audit.trustworthy else 1


def _cmd_stats(args) -> int:
    path = Path(args.trace)
    try:
        trace = _read_trace(path)
        stats = verifier.latency_stats(trace)
        print(verifier.render_stats(stats))
        series = tuple(args.series) if args.series else report.SERIES
        out_dir = Path(args.out) if args.out else path.parent / "report"
        written = report.write_report(trace, out_dir, series=series,
                                      figures=not args.no_figures)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(f"wrote:  {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coldtrace",
        description="Deterministic cold-chain sensing simulator and trust auditor.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one configured shipment")
    p_run.add_argument("--scenario", required=True,
                       help="run configuration YAML (scenario/device/channel/chain)")
    p_run.add_argument("--config", default=None,
                       help="optional overlay YAML deep-merged over the scenario file")
    p_run.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    p_run.add_argument("--out", default="out", help="output directory (default ./out)")
    p_run.set_defaults(func=_cmd_run)

    p_audit = sub.add_parser("audit", help="audit a trace or an exported ledger")
    p_audit.add_argument("--trace", required=True,
                         help="trace .jsonl or ledger .tsv (detected by content)")
    p_audit.add_argument("--params", default=None,
                         help="YAML with worst-case audit bounds "
                              "(defaults to the bounds embedded in a trace)")
    p_audit.add_argument("--as-of", type=float, default=None, dest="as_of",
                         help="audit horizon in ms (default: trace end, when known)")
    p_audit.set_defaults(func=_cmd_audit)

    p_stats = sub.add_parser("stats", help="latency stats, series CSVs, figures")
    p_stats.add_argument("--trace", required=True, help="trace .jsonl from a run")
    p_stats.add_argument("--out", default=None,
                         help="report directory (default: <trace dir>/report)")
    p_stats.add_argument("--series", action="append", choices=report.SERIES,
                         help="series to write (repeatable; default all)")
    p_stats.add_argument("--no-figures", action="store_true",
                         help="write only the delimited files")
    p_stats.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

"""Operator command line.

Commands: validate, fmt, convert, compile, simulate, replay, serve.
Model files are read by extension: ``.et`` is source text, anything else is
an exchange document. Exit codes: 0 ok, 1 validation/semantic failure,
2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dsl
from .compiler import compile_model, disassemble
from .model import CompetitionModel, SchemaError, from_exchange, to_exchange, validate
from .runtime import (
    DEFAULT_DEBOUNCE_MS,
    EventLogFormatError,
    RaceConfig,
    RaceError,
    ResultsTable,
    read_event_log,
    replay,
    results,
    results_document,
    write_event_log,
)
from .simulator import SimConfig, simulate, simulation_manifest

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_IO = 3


class _InputError(Exception):
    """Validation/semantic failure in an input file (exit 1)."""


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def _load_model(path: Path) -> CompetitionModel:
    text = _read_text(path)
    if path.suffix == dsl.FILE_EXTENSION:
        try:
            return dsl.parse_model(text)
        except (dsl.DslSyntaxError, dsl.DslSemanticError) as exc:
            raise _InputError(f"{path}:{exc}") from exc
    try:
        return from_exchange(text)
    except SchemaError as exc:
        raise _InputError(f"{path}: {exc}") from exc


def _require_valid(path: Path, model: CompetitionModel) -> None:
    report = validate(model)
    if not report.ok:
        lines = [f"{path}: error {f.code.value}: {f.message}" for f in report.errors]
        raise _InputError("\n".join(lines))


def _cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.path)
    competition = _load_model(path)
    report = validate(competition)
    for finding in report.errors:
        subject = f" (id={finding.subject})" if finding.subject is not None else ""
        print(f"error {finding.code.value}: {finding.message}{subject}")
    for finding in report.warnings:
        subject = f" (id={finding.subject})" if finding.subject is not None else ""
        print(f"warning {finding.code.value}: {finding.message}{subject}")
    print(f"{len(report.errors)} errors, {len(report.warnings)} warnings")
    return EXIT_OK if report.ok else EXIT_INVALID


def _cmd_fmt(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.suffix != dsl.FILE_EXTENSION:
        print(f"fmt expects a {dsl.FILE_EXTENSION} file, got {path}", file=sys.stderr)
        return EXIT_USAGE
    competition = _load_model(path)
    _require_valid(path, competition)
    text = dsl.format_model(competition)
    if args.write:
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_convert(args: argparse.Namespace) -> int:
    path = Path(args.path)
    competition = _load_model(path)
    _require_valid(path, competition)
    if args.to == "exchange":
        output = json.dumps(to_exchange(competition), indent=2) + "\n"
    else:
        has_positions = any(n.position for n in competition.nodes) or any(a.position for a in competition.agents)
        if has_positions:
            print("note: editor positions dropped (not representable in source text)", file=sys.stderr)
        output = dsl.format_model(competition)
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return EXIT_OK


def _cmd_compile(args: argparse.Namespace) -> int:
    path = Path(args.path)
    competition = _load_model(path)
    _require_valid(path, competition)
    sys.stdout.write(disassemble(compile_model(competition)))
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    path = Path(args.path)
    competition = _load_model(path)
    _require_valid(path, competition)
    config = SimConfig(seed=args.seed, competitors=args.competitors, duplicate_prob=args.duplicate_prob)
    events = simulate(competition, config)
    out = Path(args.out)
    with out.open("w", encoding="utf-8") as handle:
        write_event_log(handle, events)
    manifest_path = Path(str(out) + ".manifest.json")
    manifest_path.write_text(json.dumps(simulation_manifest(competition, config), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(events)} events for {config.competitors} competitors to {out}")
    return EXIT_OK


def _format_ms(ms: Optional[int]) -> str:
    if ms is None:
        return ""
    return f"{ms // 3600000}:{ms // 60000 % 60:02d}:{ms // 1000 % 60:02d}.{ms % 1000:03d}"


def render_results_table(competition: CompetitionModel, table: ResultsTable) -> str:
    """Fixed-width table: rank, bib, status, one split column per node, total."""
    by_id = {node.id: node for node in competition.nodes}
    headers = ["rank", "bib", "status"] + [by_id[node_id].name for node_id in table.path] + ["total"]
    rows = []
    for row in table.rows:
        rows.append(
            [
                str(row.rank) if row.rank is not None else "",
                str(row.bib),
                row.status.value,
                *[_format_ms(segment) for segment in row.segments],
                _format_ms(row.total),
            ]
        )
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i]) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    for row in rows:
        lines.append("  ".join(cell.rjust(widths[i]) if i != 2 else cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def _cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.path)
    competition = _load_model(path)
    _require_valid(path, competition)
    try:
        events = read_event_log(_read_text(Path(args.events)))
    except EventLogFormatError as exc:
        raise _InputError(f"{args.events}: {exc}") from exc
    roster = sorted({event.bib for event in events if event.bib >= 1})
    if not roster:
        raise _InputError(f"{args.events}: no competitor events in log")
    program = compile_model(competition)
    state = replay(program, roster, RaceConfig(debounce_ms=args.debounce_ms), events)
    table = results(state)
    if args.results_out:
        document = results_document(competition, table)
        Path(args.results_out).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(render_results_table(competition, table))
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    host, _, port = args.addr.rpartition(":")
    if not host or not port.isdigit():
        print(f"--addr must look like HOST:PORT, got {args.addr!r}", file=sys.stderr)
        return EXIT_USAGE
    uvicorn.run(create_app(), host=host, port=int(port))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="easytime", description="race timing toolchain")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file against the meta-model rules")
    p.add_argument("path")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("fmt", help="print (or rewrite with --write) canonical source text")
    p.add_argument("path")
    p.add_argument("--write", action="store_true", help="rewrite the file in place")
    p.set_defaults(func=_cmd_fmt)

    p = sub.add_parser("convert", help="convert between source text and exchange document")
    p.add_argument("path")
    p.add_argument("--to", choices=["dsl", "exchange"], required=True)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("compile", help="print the compiled rule listing")
    p.add_argument("path")
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("simulate", help="generate a seeded event log for a model")
    p.add_argument("path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--competitors", type=int, default=10)
    p.add_argument("--duplicate-prob", type=float, default=0.0)
    p.add_argument("--out", required=True, help="event log output path (manifest sidecar written next to it)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="replay an event log and print results")
    p.add_argument("path")
    p.add_argument("--events", required=True)
    p.add_argument("--results-out", help="write the results document (JSON) here")
    p.add_argument("--debounce-ms", type=int, default=DEFAULT_DEBOUNCE_MS)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="run the timing server until interrupted")
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, RaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

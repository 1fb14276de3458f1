"""Deterministic event-replay engine over compiled control-point programs.

A race is a fold of timing events through per-competitor variable stores.
Events carry (timestamp ms, bib, measuring place, agent, arrival seq); the
fold is strictly in arrival order, so replaying the same log always rebuilds
the same state. Measuring place 0 is the start signal (bib 0 broadcasts to
the whole roster); places 1..n run the compiled rule block of the matching
path node. Repeated mat reads are debounced per (bib, place) within the
configured window against the last *accepted* crossing.

Unknown bib/place/agent raise; Debounced / NotStarted / BroadcastNotAllowed
are recorded in the rejected log, never thrown, so ingestion keeps a total
accounting: every submitted event lands in exactly one of the two logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, TextIO, Union

from .compiler import (
    And,
    Cmp,
    CompiledProgram,
    Dec,
    Guard,
    IsSet,
    IsUnset,
    Rule,
    TrueGuard,
    Upd,
    Variable,
    finish_var,
    laps_var,
    start_var,
)
from .model import CompetitionModel

DEFAULT_DEBOUNCE_MS = 30000


@dataclass(frozen=True)
class TimingEvent:
    ts: int  # ms since race epoch
    bib: int  # 0 = broadcast (start signal only)
    mp: int  # 0 = start signal
    agent: int
    seq: int


@dataclass(frozen=True)
class RaceConfig:
    debounce_ms: int = DEFAULT_DEBOUNCE_MS
    epoch_label: str = ""


class RaceError(Exception):
    code = "RaceError"


class EmptyRosterError(RaceError):
    code = "EmptyRoster"


class DuplicateBibError(RaceError):
    code = "DuplicateBib"


class UnknownBibError(RaceError):
    code = "UnknownBib"


class UnknownMpError(RaceError):
    code = "UnknownMp"


class UnknownAgentError(RaceError):
    code = "UnknownAgent"


class RejectReason(str, Enum):
    DEBOUNCED = "Debounced"
    NOT_STARTED = "NotStarted"
    BROADCAST_NOT_ALLOWED = "BroadcastNotAllowed"


@dataclass(frozen=True)
class Effect:
    """One variable change: old value before, new value after."""

    bib: int
    var: Variable
    old: Optional[int]
    new: int


@dataclass
class CompetitorState:
    bib: int
    vars: dict[Variable, Optional[int]]
    last_accepted: dict[int, int] = field(default_factory=dict)  # mp -> ts
    last_event_ts: Optional[int] = None


@dataclass
class RaceState:
    """Single-writer: apply_event calls must be serialized per race."""

    program: CompiledProgram
    config: RaceConfig
    roster: tuple[int, ...]
    competitors: dict[int, CompetitorState]
    accepted: list[TimingEvent] = field(default_factory=list)
    rejected: list[tuple[TimingEvent, RejectReason]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def init_race(program: CompiledProgram, roster: Iterable[int], config: RaceConfig) -> RaceState:
    bibs = list(roster)
    if not bibs:
        raise EmptyRosterError("roster is empty")
    if len(set(bibs)) != len(bibs):
        dupes = sorted({b for b in bibs if bibs.count(b) > 1})
        raise DuplicateBibError(f"duplicate bib(s): {dupes}")
    if any(b < 1 for b in bibs):
        raise ValueError("bibs must be >= 1 (0 is the broadcast bib)")
    competitors = {
        bib: CompetitorState(bib=bib, vars={var: init for var, init in program.variables})
        for bib in sorted(bibs)
    }
    return RaceState(program=program, config=config, roster=tuple(sorted(bibs)), competitors=competitors)


def _eval_guard(guard: Guard, vars: dict[Variable, Optional[int]]) -> bool:
    if isinstance(guard, TrueGuard):
        return True
    if isinstance(guard, Cmp):
        value = vars[guard.var]
        assert value is not None, "laps variables always hold an integer"
        return {
            "==": value == guard.const,
            "!=": value != guard.const,
            "<": value < guard.const,
            ">": value > guard.const,
            "<=": value <= guard.const,
            ">=": value >= guard.const,
        }[guard.op]
    if isinstance(guard, IsSet):
        return vars[guard.var] is not None
    if isinstance(guard, IsUnset):
        return vars[guard.var] is None
    if isinstance(guard, And):
        return all(_eval_guard(part, vars) for part in guard.parts)
    raise TypeError(f"unknown guard {guard!r}")


def _run_rules(state: CompetitorState, rules: tuple[Rule, ...], ts: int) -> list[Effect]:
    effects: list[Effect] = []
    for rule in rules:
        if not _eval_guard(rule.guard, state.vars):
            continue
        action = rule.action
        old = state.vars[action.var]
        if isinstance(action, Upd):
            if old is not None:
                raise RuntimeError(f"refusing to overwrite {action.var} (write-once)")
            new = ts
        elif isinstance(action, Dec):
            assert old is not None
            new = old - 1
            if new < 0:
                raise RuntimeError(f"{action.var} would go negative")
        else:
            raise TypeError(f"unknown action {action!r}")
        state.vars[action.var] = new
        effects.append(Effect(state.bib, action.var, old, new))
    return effects


def apply_event(state: RaceState, event: TimingEvent) -> list[Effect]:
    """Apply one event, mutating state; returns every variable change in order."""
    program = state.program
    if event.agent not in program.agent_ids:
        raise UnknownAgentError(f"agent {event.agent} is not in the model")
    if event.mp < 0 or event.mp > len(program.path):
        raise UnknownMpError(f"measuring place {event.mp} does not exist (0..{len(program.path)})")
    if event.bib != 0 and event.bib not in state.competitors:
        raise UnknownBibError(f"bib {event.bib} is not on the roster")

    if event.mp == 0:
        effects: list[Effect] = []
        first = program.first_node
        if first is not None:
            targets = state.roster if event.bib == 0 else (event.bib,)
            var = start_var(first)
            for bib in targets:
                competitor = state.competitors[bib]
                if competitor.vars[var] is None:
                    competitor.vars[var] = event.ts
                    effects.append(Effect(bib, var, None, event.ts))
        state.accepted.append(event)
        if event.bib != 0:
            _note_regression(state, event)
        return effects

    if event.bib == 0:
        state.rejected.append((event, RejectReason.BROADCAST_NOT_ALLOWED))
        return []

    competitor = state.competitors[event.bib]
    last = competitor.last_accepted.get(event.mp)
    if last is not None and event.ts - last < state.config.debounce_ms:
        state.rejected.append((event, RejectReason.DEBOUNCED))
        return []
    first = program.first_node
    if first is None or competitor.vars[start_var(first)] is None:
        state.rejected.append((event, RejectReason.NOT_STARTED))
        return []

    effects = _run_rules(competitor, program.programs[event.mp].rules, event.ts)
    competitor.last_accepted[event.mp] = event.ts
    state.accepted.append(event)
    _note_regression(state, event)
    return effects


def _note_regression(state: RaceState, event: TimingEvent) -> None:
    competitor = state.competitors[event.bib]
    if competitor.last_event_ts is not None and event.ts < competitor.last_event_ts:
        state.warnings.append(
            f"bib {event.bib}: accepted event seq={event.seq} ts={event.ts} precedes previous accepted ts={competitor.last_event_ts}"
        )
    competitor.last_event_ts = event.ts


def replay(
    program: CompiledProgram,
    roster: Iterable[int],
    config: RaceConfig,
    events: Iterable[TimingEvent],
) -> RaceState:
    """Fold events (already ordered by ts, seq) into a fresh race state."""
    state = init_race(program, roster, config)
    for event in events:
        apply_event(state, event)
    return state


# --- results ------------------------------------------------------------------


class CompetitorStatus(str, Enum):
    FINISHED = "Finished"
    ON_COURSE = "OnCourse"
    NOT_STARTED = "NotStarted"


@dataclass(frozen=True)
class ResultRow:
    bib: int
    status: CompetitorStatus
    segments: tuple[Optional[int], ...]  # aligned with path order
    total: Optional[int]
    rank: Optional[int]


@dataclass(frozen=True)
class ResultsTable:
    path: tuple[int, ...]
    rows: tuple[ResultRow, ...]


def results(state: RaceState) -> ResultsTable:
    """Splits, totals, status, and standard competition ranking.

    Display order: finishers by total (ties by bib), then on-course rows by
    (finished path prefix desc, laps left in the current node asc, bib),
    then not-started by bib. Tied totals share a rank and the next rank skips.
    """
    program = state.program
    path = program.path

    finished: list[tuple[int, ResultRow]] = []
    on_course: list[tuple[tuple[int, int, int], ResultRow]] = []
    not_started: list[ResultRow] = []

    for bib in state.roster:
        vars = state.competitors[bib].vars
        segments: list[Optional[int]] = []
        for node_id in path:
            start = vars[start_var(node_id)]
            finish = vars[finish_var(node_id)]
            segments.append(finish - start if start is not None and finish is not None else None)

        start_first = vars[start_var(path[0])] if path else None
        finish_last = vars[finish_var(path[-1])] if path else None
        total = finish_last - start_first if start_first is not None and finish_last is not None else None

        if total is not None:
            row = ResultRow(bib, CompetitorStatus.FINISHED, tuple(segments), total, None)
            finished.append((total, row))
        elif start_first is None:
            not_started.append(ResultRow(bib, CompetitorStatus.NOT_STARTED, tuple(segments), None, None))
        else:
            completed = 0
            for node_id in path:
                if vars[finish_var(node_id)] is None:
                    break
                completed += 1
            current_laps = vars[laps_var(path[completed])] if completed < len(path) else 0
            assert current_laps is not None
            row = ResultRow(bib, CompetitorStatus.ON_COURSE, tuple(segments), None, None)
            on_course.append(((-completed, current_laps, bib), row))

    rows: list[ResultRow] = []
    finished.sort(key=lambda item: (item[0], item[1].bib))
    previous_total: Optional[int] = None
    rank = 0
    for position, (total, row) in enumerate(finished, start=1):
        if total != previous_total:
            rank = position
            previous_total = total
        rows.append(ResultRow(row.bib, row.status, row.segments, row.total, rank))

    on_course.sort(key=lambda item: item[0])
    rows.extend(row for _, row in on_course)
    rows.extend(sorted(not_started, key=lambda row: row.bib))
    return ResultsTable(path=path, rows=tuple(rows))


def results_document(model: CompetitionModel, table: ResultsTable) -> dict:
    """JSON-ready results body shared by the CLI and the server."""
    by_id = {node.id: node for node in model.nodes}
    return {
        "model": model.name,
        "path": [
            {"id": node_id, "name": by_id[node_id].name, "kind": by_id[node_id].kind.value}
            for node_id in table.path
        ],
        "rows": [
            {
                "bib": row.bib,
                "status": row.status.value,
                "segments": list(row.segments),
                "total": row.total,
                "rank": row.rank,
            }
            for row in table.rows
        ],
    }


# --- event log file format ------------------------------------------------------
#
# One event per line: "ts_ms;bib;mp;agent". Lines starting with '#' and blank
# lines are ignored. Arrival order is line order; seq is assigned from it.


class EventLogFormatError(ValueError):
    pass


def format_event_line(event: TimingEvent) -> str:
    return f"{event.ts};{event.bib};{event.mp};{event.agent}"


def write_event_log(out: TextIO, events: Iterable[TimingEvent]) -> None:
    for event in events:
        out.write(format_event_line(event) + "\n")


def read_event_log(source: Union[str, TextIO]) -> list[TimingEvent]:
    text = source if isinstance(source, str) else source.read()
    events: list[TimingEvent] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(";")
        if len(parts) != 4:
            raise EventLogFormatError(f"line {lineno}: expected 'ts_ms;bib;mp;agent', got {line!r}")
        try:
            ts, bib, mp, agent = (int(part) for part in parts)
        except ValueError as exc:
            raise EventLogFormatError(f"line {lineno}: non-integer field in {line!r}") from exc
        if ts < 0 or bib < 0 or mp < 0:
            raise EventLogFormatError(f"line {lineno}: negative field in {line!r}")
        events.append(TimingEvent(ts=ts, bib=bib, mp=mp, agent=agent, seq=len(events)))
    return events

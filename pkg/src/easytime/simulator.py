"""Seeded race simulation and an independent brute-force results oracle.

``simulate`` draws one normally distributed duration per (competitor, node,
lap) and accumulates them along the race path, emitting a broadcast start at
t=0 and one crossing per lap at each node's measuring place. Sampling uses
the Mersenne Twister (``random.Random``), freshly seeded per sample from
SHA-256 of (seed, stream tag, bib, node id, lap), so:

* equal (model, config) always produce the identical log, and
* turning duplicate-read noise on or off never shifts the true crossings,
  because pace and noise draw from disjoint streams.

``results_oracle`` recomputes a results table by direct counting over the
raw event log (debounce per bib/place, k-th accepted crossing finishes a
k-lap node). It never touches the rule IR or the replay engine, which makes
it a genuinely independent check of both.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .model import CompetitionModel, NodeKind, measuring_places, ordering, validate
from .runtime import (
    CompetitorStatus,
    RaceConfig,
    ResultRow,
    ResultsTable,
    TimingEvent,
)

# per-lap (mean ms, stddev ms); scenario defaults, overridable per run
DEFAULT_PACES: dict[NodeKind, tuple[int, int]] = {
    NodeKind.SWIM: (900_000, 90_000),
    NodeKind.TA1: (120_000, 20_000),
    NodeKind.BIKE: (900_000, 60_000),
    NodeKind.TA2: (120_000, 20_000),
    NodeKind.RUN: (600_000, 60_000),
}

MIN_LAP_MS = 1000
DUPLICATE_DELAY_MS = (1000, 5000)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    competitors: int
    paces: Mapping[NodeKind, tuple[int, int]] = field(default_factory=lambda: dict(DEFAULT_PACES))
    duplicate_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.competitors < 1:
            raise ValueError("competitors must be >= 1")
        if not 0.0 <= self.duplicate_prob <= 1.0:
            raise ValueError("duplicate_prob must be in [0, 1]")
        for kind, (mean, std) in self.paces.items():
            if mean <= 0 or std < 0:
                raise ValueError(f"pace for {kind.value} must have mean > 0 and stddev >= 0")


def _stream(seed: int, tag: str, bib: int, node: int, lap: int) -> random.Random:
    digest = hashlib.sha256(f"{seed}|{tag}|{bib}|{node}|{lap}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _lap_duration(config: SimConfig, bib: int, node_id: int, kind: NodeKind, lap: int) -> int:
    mean, std = config.paces[kind]
    rng = _stream(config.seed, "pace", bib, node_id, lap)
    return max(MIN_LAP_MS, round(rng.gauss(mean, std)))


def simulate(model: CompetitionModel, config: SimConfig) -> list[TimingEvent]:
    """Generate a plausible, reproducible event log for a valid model."""
    report = validate(model)
    if not report.ok:
        raise ValueError(f"model has validation errors: {', '.join(report.codes())}")
    path = ordering(model)
    if not path:
        raise ValueError("model has no nodes to simulate")

    by_id = {node.id: node for node in model.nodes}
    agent_of = {binding.node: binding.agent for binding in model.binding_arrows}
    mp_of = measuring_places(model)

    # (ts, bib, mp, agent, dup flag) -- the flag only breaks sort ties
    raw: list[tuple[int, int, int, int, int]] = [(0, 0, 0, agent_of[path[0]], 0)]
    for bib in range(1, config.competitors + 1):
        t = 0
        for node_id in path:
            node = by_id[node_id]
            mp = mp_of[node_id]
            agent = agent_of[node_id]
            for lap in range(1, node.laps + 1):
                t += _lap_duration(config, bib, node_id, node.kind, lap)
                raw.append((t, bib, mp, agent, 0))
                if config.duplicate_prob > 0:
                    noise = _stream(config.seed, "dup", bib, node_id, lap)
                    if noise.random() < config.duplicate_prob:
                        delay = noise.randint(*DUPLICATE_DELAY_MS)
                        raw.append((t + delay, bib, mp, agent, 1))

    raw.sort()
    return [TimingEvent(ts=ts, bib=bib, mp=mp, agent=agent, seq=seq) for seq, (ts, bib, mp, agent, _) in enumerate(raw)]


def simulation_manifest(model: CompetitionModel, config: SimConfig) -> dict:
    """Sidecar describing how a log was produced (JSON-ready)."""
    return {
        "model": model.name,
        "seed": config.seed,
        "competitors": config.competitors,
        "paces": {kind.value: list(pace) for kind, pace in sorted(config.paces.items(), key=lambda kv: kv[0].value)},
        "duplicate_prob": config.duplicate_prob,
    }


def results_oracle(
    model: CompetitionModel,
    roster: Iterable[int],
    events: Iterable[TimingEvent],
    config: RaceConfig,
) -> ResultsTable:
    """Results by direct counting; no compiled rules, no replay engine.

    The finish of a k-lap node is the k-th accepted crossing at its measuring
    place; each later phase starts when the previous one finishes; the first
    phase starts at the start signal. Debounce and ranking mirror the runtime
    contract so the two tables are comparable field for field.
    """
    report = validate(model)
    if not report.ok:
        raise ValueError(f"model has validation errors: {', '.join(report.codes())}")

    path = ordering(model)
    by_id = {node.id: node for node in model.nodes}
    mp_count = len(path)
    bibs = sorted(set(roster))

    started: dict[int, Optional[int]] = {bib: None for bib in bibs}
    crossings: dict[int, dict[int, list[int]]] = {bib: {mp: [] for mp in range(1, mp_count + 1)} for bib in bibs}
    last_accepted: dict[int, dict[int, int]] = {bib: {} for bib in bibs}

    for event in events:
        if event.mp == 0:
            targets = bibs if event.bib == 0 else [event.bib]
            for bib in targets:
                if bib in started and started[bib] is None:
                    started[bib] = event.ts
            continue
        if event.bib == 0 or event.bib not in started or event.mp > mp_count:
            continue
        last = last_accepted[event.bib].get(event.mp)
        if last is not None and event.ts - last < config.debounce_ms:
            continue
        if started[event.bib] is None:
            continue
        last_accepted[event.bib][event.mp] = event.ts
        crossings[event.bib][event.mp].append(event.ts)

    finished: list[tuple[int, ResultRow]] = []
    on_course: list[tuple[tuple[int, int, int], ResultRow]] = []
    not_started: list[ResultRow] = []

    for bib in bibs:
        start_first = started[bib]
        segments: list[Optional[int]] = []
        finishes: list[Optional[int]] = []
        for k, node_id in enumerate(path, start=1):
            laps = by_id[node_id].laps
            seen = crossings[bib][k]
            finish = seen[laps - 1] if len(seen) >= laps else None
            start = start_first if k == 1 else finishes[-1]
            finishes.append(finish)
            segments.append(finish - start if start is not None and finish is not None else None)

        total = (
            finishes[-1] - start_first
            if path and start_first is not None and finishes[-1] is not None
            else None
        )
        if total is not None:
            finished.append((total, ResultRow(bib, CompetitorStatus.FINISHED, tuple(segments), total, None)))
        elif start_first is None:
            not_started.append(ResultRow(bib, CompetitorStatus.NOT_STARTED, tuple(segments), None, None))
        else:
            completed = 0
            for finish in finishes:
                if finish is None:
                    break
                completed += 1
            if completed < len(path):
                node_id = path[completed]
                laps_left = max(0, by_id[node_id].laps - len(crossings[bib][completed + 1]))
            else:
                laps_left = 0
            on_course.append(
                ((-completed, laps_left, bib), ResultRow(bib, CompetitorStatus.ON_COURSE, tuple(segments), None, None))
            )

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
    return ResultsTable(path=tuple(path), rows=tuple(rows))

"""HTTP service: model storage, compilation, race lifecycle, live ingestion.

Surface (JSON bodies unless noted):

* ``POST /models`` -> 201 {id, warnings}; 400 SchemaError / 422 ValidationErrors
* ``GET /models/{id}`` -> stored exchange document
* ``POST /models/{id}/compile`` -> disassembly (text/plain)
* ``GET /models`` -> [{id, name}]
* ``POST /races {model_id, roster[], debounce_ms?}`` -> 201 {id, status}
* ``POST /races/{id}/start`` / ``POST /races/{id}/close``
* ``GET /races`` -> [{id, model_id, status}] ; ``GET /races/{id}`` -> race info
* ``POST /races/{id}/events {ts_ms?, bib, mp, agent}`` (Bearer token) ->
  accept/reject record with effects; events count only while Running
* ``GET /races/{id}/results`` -> snapshot results document

``EASYTIME_TOKEN`` sets the shared ingestion token (no auth when unset);
``EASYTIME_DATA_DIR`` enables on-disk persistence: model documents plus one
append-only event log per race, replayed on restart to recover state. Manual
console events may omit ``ts_ms``; the server stamps receipt time relative
to the race's start signal (or the start command when no signal yet) and
flags the stamping in its response.

Per-race ingestion is serialized behind a lock; results reads take the same
lock briefly, so a results body is always a consistent snapshot.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Header
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, ConfigDict

from .compiler import CompiledProgram, compile_model, disassemble
from .model import (
    CompetitionModel,
    SchemaError,
    from_exchange,
    measuring_places,
    validate,
)
from .runtime import (
    DEFAULT_DEBOUNCE_MS,
    RaceConfig,
    RaceError,
    RaceState,
    TimingEvent,
    apply_event,
    format_event_line,
    init_race,
    read_event_log,
    results,
    results_document,
)

RACE_CREATED = "Created"
RACE_RUNNING = "Running"
RACE_CLOSED = "Closed"


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass
class RaceRecord:
    race_id: str
    model_id: str
    model: CompetitionModel
    program: CompiledProgram
    state: RaceState
    status: str = RACE_CREATED
    next_seq: int = 0
    wall_started_ms: Optional[int] = None
    signal_wall_ms: Optional[int] = None
    signal_ts: Optional[int] = None
    lock: threading.RLock = field(default_factory=threading.RLock)

    def stamp(self) -> int:
        """Receipt time in ms on the race clock (start signal, else start command)."""
        now = _now_ms()
        if self.signal_wall_ms is not None and self.signal_ts is not None:
            return self.signal_ts + (now - self.signal_wall_ms)
        if self.wall_started_ms is not None:
            return max(0, now - self.wall_started_ms)
        return 0


class Store:
    """In-memory registry with optional on-disk persistence and replay recovery."""

    def __init__(self, data_dir: Optional[Path]):
        self.data_dir = data_dir
        self.lock = threading.Lock()
        self.models: dict[str, dict] = {}
        self.races: dict[str, RaceRecord] = {}
        if data_dir is not None:
            data_dir.mkdir(parents=True, exist_ok=True)
            (data_dir / "models").mkdir(exist_ok=True)
            (data_dir / "races").mkdir(exist_ok=True)
            self._recover()

    # -- ids

    def _next_id(self, prefix: str, existing: set[str]) -> str:
        highest = 0
        for value in existing:
            if value.startswith(prefix) and value[len(prefix) :].isdigit():
                highest = max(highest, int(value[len(prefix) :]))
        return f"{prefix}{highest + 1}"

    # -- models

    def add_model(self, document: dict) -> str:
        with self.lock:
            model_id = self._next_id("m", set(self.models))
            self.models[model_id] = document
            if self.data_dir is not None:
                path = self.data_dir / "models" / f"{model_id}.json"
                path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
            return model_id

    # -- races

    def add_race(self, model_id: str, roster: list[int], debounce_ms: int) -> RaceRecord:
        model = from_exchange(self.models[model_id])
        program = compile_model(model)
        state = init_race(program, roster, RaceConfig(debounce_ms=debounce_ms))
        with self.lock:
            race_id = self._next_id("r", set(self.races))
            record = RaceRecord(race_id, model_id, model, program, state)
            self.races[race_id] = record
            if self.data_dir is not None:
                (self.data_dir / "races" / race_id).mkdir(parents=True)
                (self.data_dir / "races" / race_id / "events.log").touch()
                self.persist_meta(record)
            return record

    def persist_meta(self, race: RaceRecord) -> None:
        if self.data_dir is None:
            return
        meta = {
            "race_id": race.race_id,
            "model_id": race.model_id,
            "roster": list(race.state.roster),
            "debounce_ms": race.state.config.debounce_ms,
            "status": race.status,
            "wall_started_ms": race.wall_started_ms,
            "signal_wall_ms": race.signal_wall_ms,
            "signal_ts": race.signal_ts,
        }
        path = self.data_dir / "races" / race.race_id / "meta.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        tmp.replace(path)

    def append_event(self, race: RaceRecord, event: TimingEvent) -> None:
        if self.data_dir is None:
            return
        path = self.data_dir / "races" / race.race_id / "events.log"
        with path.open("a", encoding="utf-8") as handle:
            handle.write(format_event_line(event) + "\n")

    def _recover(self) -> None:
        assert self.data_dir is not None
        for path in sorted((self.data_dir / "models").glob("*.json")):
            self.models[path.stem] = json.loads(path.read_text(encoding="utf-8"))
        for race_dir in sorted((self.data_dir / "races").iterdir()):
            meta_path = race_dir / "meta.json"
            if not meta_path.is_file():
                continue
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            model = from_exchange(self.models[meta["model_id"]])
            program = compile_model(model)
            state = init_race(program, meta["roster"], RaceConfig(debounce_ms=meta["debounce_ms"]))
            record = RaceRecord(
                race_id=meta["race_id"],
                model_id=meta["model_id"],
                model=model,
                program=program,
                state=state,
                status=meta["status"],
                wall_started_ms=meta.get("wall_started_ms"),
                signal_wall_ms=meta.get("signal_wall_ms"),
                signal_ts=meta.get("signal_ts"),
            )
            log_path = race_dir / "events.log"
            if log_path.is_file():
                events = read_event_log(log_path.read_text(encoding="utf-8"))
                for event in events:
                    apply_event(record.state, event)
                record.next_seq = len(events)
            self.races[record.race_id] = record


class RaceCreate(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_id: str
    roster: list[int]
    debounce_ms: int = DEFAULT_DEBOUNCE_MS


class EventBody(BaseModel):
    ts_ms: Optional[int] = None
    bib: int
    mp: int
    agent: int


def create_app(data_dir: Optional[Path] = None, token: Optional[str] = None) -> FastAPI:
    """Build the service. Arguments default to EASYTIME_DATA_DIR / EASYTIME_TOKEN."""
    if data_dir is None:
        env_dir = os.environ.get("EASYTIME_DATA_DIR")
        data_dir = Path(env_dir) if env_dir else None
    if token is None:
        token = os.environ.get("EASYTIME_TOKEN")

    store = Store(data_dir)
    app = FastAPI(title="easytime", version="0.1.0")
    # the browser UI is served statically from anywhere on the local network
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def error(status: int, code: str, **extra) -> JSONResponse:
        return JSONResponse({"error": code, **extra}, status_code=status)

    def race_or_none(race_id: str) -> Optional[RaceRecord]:
        return store.races.get(race_id)

    @app.post("/models", status_code=201)
    def create_model(payload: dict = Body()):
        try:
            model = from_exchange(payload)
        except SchemaError as exc:
            return error(400, "SchemaError", path=exc.path, message=exc.message)
        report = validate(model)
        findings = {
            "errors": [{"code": f.code.value, "message": f.message, "subject": f.subject} for f in report.errors],
            "warnings": [{"code": f.code.value, "message": f.message, "subject": f.subject} for f in report.warnings],
        }
        if not report.ok:
            return error(422, "ValidationErrors", report=findings)
        model_id = store.add_model(payload)
        return {"id": model_id, "warnings": findings["warnings"]}

    @app.get("/models")
    def list_models():
        return [{"id": model_id, "name": doc.get("name", "")} for model_id, doc in sorted(store.models.items())]

    @app.get("/models/{model_id}")
    def get_model(model_id: str):
        doc = store.models.get(model_id)
        if doc is None:
            return error(404, "UnknownModel")
        return doc

    @app.post("/models/{model_id}/compile")
    def compile_stored_model(model_id: str):
        doc = store.models.get(model_id)
        if doc is None:
            return error(404, "UnknownModel")
        return PlainTextResponse(disassemble(compile_model(from_exchange(doc))))

    @app.post("/races", status_code=201)
    def create_race(body: RaceCreate):
        if body.model_id not in store.models:
            return error(404, "UnknownModel")
        if body.debounce_ms < 0:
            return error(400, "InvalidDebounce", message="debounce_ms must be >= 0")
        try:
            record = store.add_race(body.model_id, body.roster, body.debounce_ms)
        except RaceError as exc:
            return error(400, exc.code, message=str(exc))
        except ValueError as exc:
            return error(400, "InvalidRoster", message=str(exc))
        return {"id": record.race_id, "status": record.status}

    @app.get("/races")
    def list_races():
        return [
            {"id": race.race_id, "model_id": race.model_id, "status": race.status}
            for _, race in sorted(store.races.items())
        ]

    @app.get("/races/{race_id}")
    def get_race(race_id: str):
        race = race_or_none(race_id)
        if race is None:
            return error(404, "UnknownRace")
        mp_of = measuring_places(race.model)
        by_id = {node.id: node for node in race.model.nodes}
        agents = {agent.id: agent for agent in race.model.agents}
        agent_of = {binding.node: binding.agent for binding in race.model.binding_arrows}
        places = []
        for node_id, mp in sorted(mp_of.items(), key=lambda kv: kv[1]):
            node = by_id[node_id]
            agent = agents[agent_of[node_id]]
            places.append(
                {
                    "mp": mp,
                    "node": node_id,
                    "name": node.name,
                    "kind": node.kind.value,
                    "laps": node.laps,
                    "agent": agent.id,
                    "agent_kind": agent.kind.value,
                }
            )
        return {
            "id": race.race_id,
            "model_id": race.model_id,
            "status": race.status,
            "roster": list(race.state.roster),
            "debounce_ms": race.state.config.debounce_ms,
            "measuring_places": places,
        }

    @app.post("/races/{race_id}/start")
    def start_race(race_id: str):
        race = race_or_none(race_id)
        if race is None:
            return error(404, "UnknownRace")
        with race.lock:
            if race.status != RACE_CREATED:
                return error(409, "InvalidTransition", message=f"cannot start a {race.status} race")
            race.status = RACE_RUNNING
            race.wall_started_ms = _now_ms()
            store.persist_meta(race)
            return {"id": race.race_id, "status": race.status}

    @app.post("/races/{race_id}/close")
    def close_race(race_id: str):
        race = race_or_none(race_id)
        if race is None:
            return error(404, "UnknownRace")
        with race.lock:
            if race.status != RACE_RUNNING:
                return error(409, "InvalidTransition", message=f"cannot close a {race.status} race")
            race.status = RACE_CLOSED
            store.persist_meta(race)
            return {"id": race.race_id, "status": race.status}

    @app.post("/races/{race_id}/events")
    def ingest_event(race_id: str, body: EventBody, authorization: Optional[str] = Header(default=None)):
        if token is not None and authorization != f"Bearer {token}":
            return error(401, "Unauthorized")
        race = race_or_none(race_id)
        if race is None:
            return error(404, "UnknownRace")
        with race.lock:
            if race.status != RACE_RUNNING:
                return error(409, "RaceNotRunning")
            stamped = body.ts_ms is None
            ts = race.stamp() if stamped else body.ts_ms
            event = TimingEvent(ts=ts, bib=body.bib, mp=body.mp, agent=body.agent, seq=race.next_seq)
            try:
                effects = apply_event(race.state, event)
            except RaceError as exc:
                return error(400, exc.code, message=str(exc))
            race.next_seq += 1
            store.append_event(race, event)
            if event.mp == 0 and race.signal_wall_ms is None:
                race.signal_wall_ms = _now_ms()
                race.signal_ts = event.ts
                store.persist_meta(race)
            accepted = bool(race.state.accepted) and race.state.accepted[-1] is event
            reason = None
            if not accepted:
                reason = race.state.rejected[-1][1].value
            return {
                "accepted": accepted,
                "reason": reason,
                "seq": event.seq,
                "ts_ms": event.ts,
                "stamped": stamped,
                "effects": [
                    {
                        "bib": effect.bib,
                        "variable": effect.var.render(race.program.node_names),
                        "old": effect.old,
                        "new": effect.new,
                    }
                    for effect in effects
                ],
            }

    @app.get("/races/{race_id}/results")
    def get_results(race_id: str):
        race = race_or_none(race_id)
        if race is None:
            return error(404, "UnknownRace")
        with race.lock:
            table = results(race.state)
        return {"race_id": race.race_id, "status": race.status, **results_document(race.model, table)}

    return app

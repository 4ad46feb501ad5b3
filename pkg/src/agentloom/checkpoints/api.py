"""HTTP surface for operating runs: list them, read transcripts, decide
pending checkpoints, and follow the provenance stream live.

The app is deliberately thin: every answer is computed from the run host's
live state or from a recorded run directory; nothing is cached.  A single
bearer token (``AGENTLOOM_DASH_TOKEN``) guards all routes when set.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..canonical import isoformat
from ..core import load_pipeline_spec, new_run
from ..core.types import Message, RunState, TERMINAL_STATUSES
from ..provenance.events import EventLog, open_run_dir
from ..provenance.manifest import RunManifest, read_manifest
from ..toolkit.registry import ToolRegistry
from .sources import QueueSource
from .store import CheckpointError, CheckpointRecord, CheckpointStore, Decision

logger = logging.getLogger(__name__)

_TERMINAL_VALUES = {status.value for status in TERMINAL_STATUSES}


@dataclass
class HostedRun:
    """One run the host knows about: live (driven by a thread) or recorded."""

    run_id: str
    pipeline: str
    log: EventLog
    run: Optional[RunState] = None  # set for live runs
    manifest: Optional[RunManifest] = None  # set for recorded runs
    thread: Optional[threading.Thread] = None
    result: Any = None
    error: str = ""
    done: threading.Event = field(default_factory=threading.Event)

    @property
    def live(self) -> bool:
        return self.run is not None

    @property
    def status(self) -> str:
        if self.run is not None:
            return self.run.status.value
        return self.manifest.status if self.manifest else "unknown"

    @property
    def started_at(self) -> str:
        if self.run is not None:
            return isoformat(self.run.started_at)
        head = self.log.events(1)
        if head:
            return isoformat(head[0].time)
        return isoformat(self.manifest.created_at) if self.manifest else ""


class RunHost:
    """Owns the checkpoint store and every run the HTTP API can see.

    Live runs execute on daemon threads and block on the shared store for
    checkpoint decisions, so a POST against the API resumes them.  Recorded
    runs are read-only attachments of finished run directories.
    """

    def __init__(
        self,
        store: Optional[CheckpointStore] = None,
        registry: Optional[ToolRegistry] = None,
    ) -> None:
        if registry is None:
            from ..toolkit.standard import build_standard_registry

            registry = build_standard_registry()
        self.store = store or CheckpointStore()
        self.registry = registry
        self._runs: Dict[str, HostedRun] = {}
        self._lock = threading.Lock()

    def start(
        self,
        spec,
        backend,
        log_root: Path,
        params: Optional[Dict[str, Any]] = None,
        seed: int = 0,
        toolctx=None,
        listeners=(),
    ) -> str:
        """Launch a run on a background thread; decisions arrive via the store."""
        from ..orchestrator.engine import run_pipeline

        run = new_run(spec, params or {}, seed=seed)
        with self._lock:
            if run.run_id in self._runs:
                raise ValueError(f"run {run.run_id} is already hosted")
            log = EventLog(log_root, run.run_id)
            hosted = HostedRun(run_id=run.run_id, pipeline=spec.name, log=log, run=run)
            self._runs[run.run_id] = hosted
        decisions = QueueSource(self.store)

        def drive() -> None:
            try:
                hosted.result = run_pipeline(
                    run,
                    backend,
                    self.registry,
                    decisions,
                    log,
                    checkpoint_store=self.store,
                    toolctx=toolctx,
                    listeners=listeners,
                )
            except Exception as exc:  # surfaced through GET /runs/{id}
                hosted.error = str(exc)
                logger.exception("hosted run %s crashed", run.run_id)
            finally:
                hosted.done.set()

        hosted.thread = threading.Thread(
            target=drive, name=f"run-{run.run_id}", daemon=True
        )
        hosted.thread.start()
        logger.info("started hosted run %s (%s)", run.run_id, spec.name)
        return run.run_id

    def attach(self, run_dir: Path) -> str:
        """Expose a finished run directory read-only."""
        log = open_run_dir(Path(run_dir))
        manifest = read_manifest(Path(run_dir))
        spec = load_pipeline_spec(log.read_spec_copy())
        hosted = HostedRun(
            run_id=manifest.run_id, pipeline=spec.name, log=log, manifest=manifest
        )
        hosted.done.set()
        with self._lock:
            if manifest.run_id in self._runs:
                raise ValueError(f"run {manifest.run_id} is already hosted")
            self._runs[manifest.run_id] = hosted
        return manifest.run_id

    def get(self, run_id: str) -> HostedRun:
        with self._lock:
            if run_id not in self._runs:
                raise KeyError(run_id)
            return self._runs[run_id]

    def runs(self) -> List[HostedRun]:
        with self._lock:
            return list(self._runs.values())

    def wait(self, run_id: str, timeout: Optional[float] = None):
        """Block until a live run finishes; returns its RunResult (or None)."""
        hosted = self.get(run_id)
        hosted.done.wait(timeout)
        return hosted.result

    def records(self, hosted: HostedRun) -> List[CheckpointRecord]:
        if hosted.live:
            return self.store.records(hosted.run_id)
        return _records_from_events(hosted.log)


def _records_from_events(log: EventLog) -> List[CheckpointRecord]:
    """Rebuild the checkpoint history of a recorded run from its events."""
    records: Dict[str, CheckpointRecord] = {}
    order: List[str] = []
    for event in log.events():
        if event.kind == "checkpoint-open":
            record = CheckpointRecord.from_dict(event.payload)
            records[record.record_id] = record
            order.append(record.record_id)
        elif event.kind == "checkpoint-decide":
            record = records.get(event.payload.get("record_id", ""))
            if record is not None:
                record.decision = Decision.from_dict(event.payload["decision"])
                record.decided_by = event.payload.get("decided_by", "")
                record.decided_at = event.time
    return [records[rid] for rid in order]


def _summary(host: RunHost, hosted: HostedRun) -> Dict[str, Any]:
    pending = len(host.store.pending(hosted.run_id)) if hosted.live else 0
    return {
        "run_id": hosted.run_id,
        "pipeline": hosted.pipeline,
        "status": hosted.status,
        "stage": hosted.run.stage_cursor if hosted.live else None,
        "pending_checkpoints": pending,
        "started_at": hosted.started_at,
    }


def _transcript(hosted: HostedRun) -> List[Message]:
    if hosted.live:
        return list(hosted.run.transcript)
    return [
        Message.from_dict(e.payload) for e in hosted.log.events() if e.kind == "message"
    ]


def _terminal_seq(log: EventLog) -> Optional[int]:
    for event in reversed(log.events()):
        if event.kind == "run-status" and event.payload.get("status") in _TERMINAL_VALUES:
            return event.seq
    return None


def build_app(
    host: RunHost,
    token: Optional[str] = None,
    static_dir: Optional[Path] = None,
) -> FastAPI:
    """Assemble the API app around *host*.

    ``token=None`` reads ``AGENTLOOM_DASH_TOKEN``; an empty value disables
    authentication.  When *static_dir* exists it is served at ``/`` (the
    dashboard build), with API routes taking precedence.
    """
    expected = os.environ.get("AGENTLOOM_DASH_TOKEN", "") if token is None else token
    app = FastAPI(title="agentloom run API", version="1")

    def _authorize(request: Request) -> None:
        if not expected:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def _hosted(run_id: str) -> HostedRun:
        try:
            return host.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")

    @app.get("/runs")
    def list_runs(request: Request) -> List[Dict[str, Any]]:
        _authorize(request)
        summaries = [_summary(host, hosted) for hosted in host.runs()]
        summaries.sort(key=lambda s: (s["started_at"], s["run_id"]), reverse=True)
        return summaries

    @app.get("/runs/{run_id}")
    def run_detail(run_id: str, request: Request) -> Dict[str, Any]:
        _authorize(request)
        hosted = _hosted(run_id)
        detail = _summary(host, hosted)
        if hosted.live:
            detail["seed"] = hosted.run.seed
            detail["params"] = dict(hosted.run.params)
            detail["cause"] = hosted.run.cause
        else:
            detail["seed"] = hosted.manifest.seed if hosted.manifest else None
            detail["params"] = dict(hosted.manifest.params) if hosted.manifest else {}
            detail["cause"] = None
        detail["error"] = hosted.error
        detail["transcript"] = [m.to_dict() for m in _transcript(hosted)]
        return detail

    @app.get("/checkpoints")
    def list_checkpoints(
        request: Request,
        pending: bool = Query(False),
        run: Optional[str] = Query(None),
    ) -> List[Dict[str, Any]]:
        _authorize(request)
        if run is not None:
            hosted = _hosted(run)
            records = host.records(hosted)
        else:
            records = []
            for hosted in host.runs():
                records.extend(host.records(hosted))
        if pending:
            records = [r for r in records if not r.decided]
            records.reverse()  # newest first, matching the store's pending()
        return [r.to_dict() for r in records]

    @app.post("/checkpoints/{record_id}/decision")
    def decide(record_id: str, body: Dict[str, Any], request: Request) -> Dict[str, Any]:
        _authorize(request)
        doc = dict(body)
        decided_by = str(doc.pop("decided_by", "") or "api")
        try:
            decision = Decision.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed decision: {exc}")
        try:
            record = host.store.get(record_id)
        except CheckpointError:
            raise HTTPException(status_code=404, detail=f"unknown checkpoint record {record_id!r}")
        if record.decided:
            raise HTTPException(status_code=409, detail=f"record {record_id!r} already decided")
        try:
            record = host.store.decide(record_id, decision, decided_by)
        except CheckpointError as exc:  # lost a race with another decider
            raise HTTPException(status_code=409, detail=str(exc))
        logger.info("decision %s on %s by %s", decision.kind, record_id, decided_by)
        return record.to_dict()

    @app.get("/events")
    def poll_events(
        request: Request,
        run: str = Query(...),
        from_seq: int = Query(1, ge=1),
        wait: float = Query(0.0, ge=0.0, le=60.0),
    ) -> Dict[str, Any]:
        _authorize(request)
        hosted = _hosted(run)
        events = hosted.log.events(from_seq)
        if not events and wait > 0:
            events = hosted.log.wait_for(from_seq - 1, timeout=wait)
        next_seq = events[-1].seq + 1 if events else from_seq
        return {
            "run_id": run,
            "events": [e.to_dict() for e in events],
            "next_seq": next_seq,
        }

    @app.get("/events/stream")
    def stream_events(
        request: Request,
        run: str = Query(...),
        from_seq: int = Query(1, ge=1),
    ) -> StreamingResponse:
        _authorize(request)
        hosted = _hosted(run)
        last_id = request.headers.get("last-event-id", "")
        start = int(last_id) + 1 if last_id.isdigit() else from_seq

        def feed():
            cursor = start
            while True:
                batch = hosted.log.events(cursor)
                if not batch:
                    terminal = _terminal_seq(hosted.log)
                    if terminal is not None and cursor > terminal:
                        return  # run over and fully delivered
                    batch = hosted.log.wait_for(cursor - 1, timeout=1.0)
                for event in batch:
                    cursor = event.seq + 1
                    doc = json.dumps(event.to_dict(), sort_keys=True)
                    yield f"id: {event.seq}\nevent: {event.kind}\ndata: {doc}\n\n"

        return StreamingResponse(feed(), media_type="text/event-stream")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="dashboard")

    return app

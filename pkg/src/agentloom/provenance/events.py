"""Append-only run event logs: one directory per run, one document per line.

Events are written ahead of the state changes they describe, flushed and
fsynced per append so a crash never leaves the run ahead of its log.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from ..canonical import digest, isoformat, utcnow

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

EVENT_KINDS = (
    "run-status",
    "message",
    "tool-invoke",
    "tool-result",
    "checkpoint-open",
    "checkpoint-decide",
    "escalation",
    "backend-call",
    "backend-reply",
)

EVENTS_FILE = "events.ndjson"
SPEC_FILE = "pipeline.yaml"
MANIFEST_FILE = "manifest.json"
ATTACHMENTS_DIR = "attachments"


class ProvenanceError(RuntimeError):
    """The event log was used or stored incorrectly."""


class SequenceError(ProvenanceError):
    """An append would break the strictly-increasing sequence."""


@dataclass(frozen=True)
class ProvenanceEvent:
    """One recorded step of a run."""

    seq: int
    kind: str
    actor: str
    payload: Dict[str, Any]
    payload_digest: str
    time: datetime = field(default_factory=utcnow)

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if self.seq < 1:
            raise ValueError("event seq starts at 1")

    @classmethod
    def build(
        cls,
        seq: int,
        kind: str,
        actor: str,
        payload: Dict[str, Any],
        time: Optional[datetime] = None,
    ) -> "ProvenanceEvent":
        return cls(
            seq=seq,
            kind=kind,
            actor=actor,
            payload=payload,
            payload_digest=digest(payload),
            time=time or utcnow(),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "seq": self.seq,
            "time": isoformat(self.time),
            "kind": self.kind,
            "actor": self.actor,
            "payload": self.payload,
            "payload_digest": self.payload_digest,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ProvenanceEvent":
        return cls(
            seq=doc["seq"],
            kind=doc["kind"],
            actor=doc.get("actor", ""),
            payload=doc.get("payload", {}),
            payload_digest=doc.get("payload_digest", ""),
            time=datetime.fromisoformat(doc["time"]),
        )


class EventLog:
    """Writer/reader for one run's event directory."""

    def __init__(self, root: Path, run_id: str, create: bool = True) -> None:
        self.run_id = run_id
        self.dir = Path(root) / run_id
        if create:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / ATTACHMENTS_DIR).mkdir(exist_ok=True)
        self._events: List[ProvenanceEvent] = []
        self._cond = threading.Condition()
        self._fh = None
        path = self.dir / EVENTS_FILE
        if path.exists():
            self._events = list(read_events(path))

    @property
    def next_seq(self) -> int:
        return len(self._events) + 1

    @property
    def last_seq(self) -> int:
        return len(self._events)

    def append(self, event: ProvenanceEvent) -> None:
        with self._cond:
            expected = len(self._events) + 1
            if event.seq != expected:
                raise SequenceError(
                    f"run {self.run_id}: expected seq {expected}, got {event.seq}"
                )
            if self._fh is None:
                self._fh = open(self.dir / EVENTS_FILE, "a", encoding="utf-8")
            line = json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":"))
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._events.append(event)
            self._cond.notify_all()

    def events(self, from_seq: int = 1) -> List[ProvenanceEvent]:
        with self._cond:
            return [e for e in self._events if e.seq >= from_seq]

    def wait_for(self, after_seq: int, timeout: Optional[float] = None) -> List[ProvenanceEvent]:
        """Events with seq > after_seq, blocking up to *timeout* for new ones."""
        with self._cond:
            if not self._cond.wait_for(
                lambda: len(self._events) > after_seq, timeout=timeout
            ):
                return []
            return [e for e in self._events if e.seq > after_seq]

    def write_spec_copy(self, text: str) -> None:
        (self.dir / SPEC_FILE).write_text(text, encoding="utf-8")

    def read_spec_copy(self) -> str:
        return (self.dir / SPEC_FILE).read_text(encoding="utf-8")

    def save_attachment(self, name: str, data: bytes) -> Path:
        safe = name.replace("/", "_")
        path = self.dir / ATTACHMENTS_DIR / safe
        path.write_bytes(data)
        return path

    def close(self) -> None:
        with self._cond:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_events(path: Path) -> Iterable[ProvenanceEvent]:
    """Parse an events file; malformed lines are a provenance error."""
    events: List[ProvenanceEvent] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                events.append(ProvenanceEvent.from_dict(doc))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ProvenanceError(f"{path}:{lineno}: malformed event: {exc}") from exc
    return events


def open_run_dir(path: Path) -> EventLog:
    """Open an existing run directory for reading."""
    path = Path(path)
    if not (path / EVENTS_FILE).exists():
        raise ProvenanceError(f"{path} has no {EVENTS_FILE}")
    return EventLog(path.parent, path.name, create=False)

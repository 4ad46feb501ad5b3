"""Checkpoint records and the store that holds them while humans decide.

A record is opened undecided, surfaced through ``pending``, and decided exactly
once; deciders may live on other threads (the HTTP API), so each record carries
an event the orchestrator can block on.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

from ..canonical import isoformat, utcnow

logger = logging.getLogger(__name__)

DECISION_KINDS = ("approve", "revise", "abort")


class CheckpointError(RuntimeError):
    """A checkpoint record was opened or decided incorrectly."""


@dataclass(frozen=True)
class Decision:
    """What the human (or a policy acting for them) said.

    ``rerun`` left as None on a revise means "use the checkpoint's declared
    default" — some review points re-run the stage with feedback, others just
    carry it forward.
    """

    kind: str
    feedback: str = ""
    rerun: Optional[bool] = None
    revised_task: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in DECISION_KINDS:
            raise ValueError(f"unknown decision kind: {self.kind!r}")
        if self.kind != "revise" and (
            self.feedback or self.rerun is not None or self.revised_task
        ):
            raise ValueError("feedback, rerun and revised_task apply to revise only")
        if self.kind == "revise" and not self.feedback.strip():
            raise ValueError("revise requires feedback text")

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "revise":
            doc["feedback"] = self.feedback
            if self.rerun is not None:
                doc["rerun"] = self.rerun
            if self.revised_task is not None:
                doc["revised_task"] = self.revised_task
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Decision":
        rerun = doc.get("rerun")
        return cls(
            kind=doc["kind"],
            feedback=doc.get("feedback", ""),
            rerun=bool(rerun) if rerun is not None else None,
            revised_task=doc.get("revised_task"),
        )


@dataclass
class CheckpointRecord:
    """One opened checkpoint, pending or decided."""

    record_id: str
    checkpoint_id: str
    run_id: str
    stage_id: str
    prompt: str
    payload: Dict[str, Any] = field(default_factory=dict)
    opened_at: datetime = field(default_factory=utcnow)
    decision: Optional[Decision] = None
    decided_at: Optional[datetime] = None
    decided_by: str = ""

    @property
    def decided(self) -> bool:
        return self.decision is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "record_id": self.record_id,
            "checkpoint_id": self.checkpoint_id,
            "run_id": self.run_id,
            "stage_id": self.stage_id,
            "prompt": self.prompt,
            "payload": self.payload,
            "opened_at": isoformat(self.opened_at),
            "decision": self.decision.to_dict() if self.decision else None,
            "decided_at": isoformat(self.decided_at) if self.decided_at else None,
            "decided_by": self.decided_by,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "CheckpointRecord":
        decision = doc.get("decision")
        decided_at = doc.get("decided_at")
        return cls(
            record_id=doc["record_id"],
            checkpoint_id=doc["checkpoint_id"],
            run_id=doc["run_id"],
            stage_id=doc.get("stage_id", ""),
            prompt=doc.get("prompt", ""),
            payload=doc.get("payload", {}),
            opened_at=datetime.fromisoformat(doc["opened_at"]),
            decision=Decision.from_dict(decision) if decision else None,
            decided_at=datetime.fromisoformat(decided_at) if decided_at else None,
            decided_by=doc.get("decided_by", ""),
        )


class CheckpointStore:
    """In-memory registry of checkpoint records, safe across threads."""

    def __init__(self) -> None:
        self._records: Dict[str, CheckpointRecord] = {}
        self._events: Dict[str, threading.Event] = {}
        self._order: List[str] = []
        self._lock = threading.Lock()

    def open(
        self,
        record_id: str,
        checkpoint_id: str,
        run_id: str,
        stage_id: str,
        prompt: str,
        payload: Optional[Dict[str, Any]] = None,
    ) -> CheckpointRecord:
        with self._lock:
            if record_id in self._records:
                raise CheckpointError(f"record {record_id} already exists")
            for rec in self._records.values():
                if rec.run_id == run_id and rec.checkpoint_id == checkpoint_id:
                    raise CheckpointError(
                        f"checkpoint {checkpoint_id!r} already opened for run {run_id}"
                    )
            record = CheckpointRecord(
                record_id=record_id,
                checkpoint_id=checkpoint_id,
                run_id=run_id,
                stage_id=stage_id,
                prompt=prompt,
                payload=payload or {},
            )
            self._records[record_id] = record
            self._events[record_id] = threading.Event()
            self._order.append(record_id)
            logger.debug("opened checkpoint %s (%s / %s)", record_id, run_id, checkpoint_id)
            return record

    def get(self, record_id: str) -> CheckpointRecord:
        with self._lock:
            try:
                return self._records[record_id]
            except KeyError:
                raise CheckpointError(f"no checkpoint record {record_id}") from None

    def decide(self, record_id: str, decision: Decision, decided_by: str) -> CheckpointRecord:
        with self._lock:
            record = self._records.get(record_id)
            if record is None:
                raise CheckpointError(f"no checkpoint record {record_id}")
            if record.decision is not None:
                raise CheckpointError(f"record {record_id} already decided")
            record.decision = decision
            record.decided_at = utcnow()
            record.decided_by = decided_by
            self._events[record_id].set()
            logger.debug("decided %s: %s by %s", record_id, decision.kind, decided_by)
            return record

    def wait(self, record_id: str, timeout: Optional[float] = None) -> Optional[Decision]:
        """Block until the record is decided; None on timeout."""
        with self._lock:
            record = self._records.get(record_id)
            if record is None:
                raise CheckpointError(f"no checkpoint record {record_id}")
            event = self._events[record_id]
        if not event.wait(timeout=timeout):
            return None
        return self.get(record_id).decision

    def pending(self, run_id: Optional[str] = None) -> List[CheckpointRecord]:
        """Undecided records, newest first."""
        with self._lock:
            out = [
                self._records[rid]
                for rid in reversed(self._order)
                if self._records[rid].decision is None
            ]
        if run_id is not None:
            out = [r for r in out if r.run_id == run_id]
        return out

    def records(self, run_id: Optional[str] = None) -> List[CheckpointRecord]:
        """All records in open order, optionally filtered by run."""
        with self._lock:
            out = [self._records[rid] for rid in self._order]
        if run_id is not None:
            out = [r for r in out if r.run_id == run_id]
        return out

"""Run manifests: the capsule that makes a finished run checkable and replayable."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from ..canonical import isoformat, utcnow
from ..core.types import TERMINAL_STATUSES, RunState, transcript_digest
from .events import MANIFEST_FILE, EventLog, ProvenanceError

logger = logging.getLogger(__name__)

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunManifest:
    """Digest-bearing summary written once, when a run reaches a terminal state."""

    run_id: str
    status: str
    spec_digest: str
    params: Dict[str, Any]
    seed: int
    backend: Dict[str, Any]
    registry_digest: str
    event_count: int
    transcript_digest: str
    created_at: datetime = field(default_factory=utcnow)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": MANIFEST_FORMAT_VERSION,
            "run_id": self.run_id,
            "status": self.status,
            "spec_digest": self.spec_digest,
            "params": self.params,
            "seed": self.seed,
            "backend": self.backend,
            "registry_digest": self.registry_digest,
            "event_count": self.event_count,
            "transcript_digest": self.transcript_digest,
            "created_at": isoformat(self.created_at),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "RunManifest":
        return cls(
            run_id=doc["run_id"],
            status=doc.get("status", ""),
            spec_digest=doc["spec_digest"],
            params=doc.get("params", {}),
            seed=doc.get("seed", 0),
            backend=doc.get("backend", {}),
            registry_digest=doc.get("registry_digest", ""),
            event_count=doc["event_count"],
            transcript_digest=doc["transcript_digest"],
            created_at=datetime.fromisoformat(doc["created_at"]),
        )


def write_manifest(
    run: RunState,
    log: EventLog,
    backend_descriptor: Optional[Dict[str, Any]] = None,
    registry_digest: str = "",
) -> RunManifest:
    """Persist the manifest beside the event log.  Only terminal runs qualify."""
    if run.status not in TERMINAL_STATUSES:
        raise ProvenanceError(
            f"run {run.run_id} is {run.status.value}; manifests are written once a run ends"
        )
    manifest = RunManifest(
        run_id=run.run_id,
        status=run.status.value,
        spec_digest=run.spec_hash,
        params=dict(run.params),
        seed=run.seed,
        backend=dict(backend_descriptor or {}),
        registry_digest=registry_digest,
        event_count=log.last_seq,
        transcript_digest=transcript_digest(run.transcript),
    )
    path = log.dir / MANIFEST_FILE
    path.write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.debug("wrote manifest for %s (%d events)", run.run_id, manifest.event_count)
    return manifest


def read_manifest(run_dir: Path) -> RunManifest:
    path = Path(run_dir) / MANIFEST_FILE
    if not path.exists():
        raise ProvenanceError(f"{run_dir} has no {MANIFEST_FILE}")
    return RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))

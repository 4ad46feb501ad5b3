"""Event-sourced run logs, manifests, and replay verification."""

from .events import (
    EVENT_KINDS,
    EVENTS_FILE,
    MANIFEST_FILE,
    SPEC_FILE,
    EventLog,
    ProvenanceError,
    ProvenanceEvent,
    SequenceError,
    open_run_dir,
    read_events,
)
from .manifest import RunManifest, read_manifest, write_manifest
from .replay import ReplayError, TamperError, VerifyReport, replay, verify

__all__ = [
    "EVENT_KINDS",
    "EVENTS_FILE",
    "MANIFEST_FILE",
    "SPEC_FILE",
    "EventLog",
    "ProvenanceError",
    "ProvenanceEvent",
    "ReplayError",
    "RunManifest",
    "SequenceError",
    "TamperError",
    "VerifyReport",
    "open_run_dir",
    "read_events",
    "read_manifest",
    "replay",
    "verify",
    "write_manifest",
]

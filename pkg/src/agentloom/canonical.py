"""Canonical serialization and digests.

Every digest in the system (spec hashes, event payload digests, transcript and
manifest digests) is a SHA-256 over the same canonical form: compact JSON with
sorted keys, after recursively removing volatile wall-clock fields.  Keeping a
single rule here is what makes "identical excluding timestamps" checkable at
every layer with one helper.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from typing import Any

# Wall-clock fields, excluded from digests and from determinism comparisons.
VOLATILE_KEYS = frozenset(
    {"time", "timestamp", "opened_at", "decided_at", "created_at", "duration_s"}
)


def strip_volatile(doc: Any) -> Any:
    """Return a copy of *doc* with volatile keys removed at every depth."""
    if isinstance(doc, dict):
        return {k: strip_volatile(v) for k, v in doc.items() if k not in VOLATILE_KEYS}
    if isinstance(doc, (list, tuple)):
        return [strip_volatile(v) for v in doc]
    return doc


def canonical_json(doc: Any) -> str:
    """Compact, key-sorted JSON representation of *doc* (volatile keys kept)."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(doc: Any) -> str:
    """SHA-256 hex digest of the canonical form of *doc*, volatile keys stripped."""
    text = canonical_json(strip_volatile(doc))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_text(text: str) -> str:
    """SHA-256 hex digest of raw text (used for verbatim file copies)."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def isoformat(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Clock:
    """Wall clock that never moves backwards within one process."""

    def __init__(self) -> None:
        self._last: datetime | None = None

    def now(self) -> datetime:
        t = utcnow()
        if self._last is not None and t < self._last:
            t = self._last
        self._last = t
        return t

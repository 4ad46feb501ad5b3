"""Read-only verification and deterministic re-execution of recorded runs.

A run directory is self-contained: the spec copy, the event log, and the
manifest together determine the whole run.  ``verify`` checks that nothing
was lost or edited; ``replay`` re-executes the run with every external
input (model completions, tool results, checkpoint decisions) served from
the recording, then proves the reconstruction by digest.
"""

from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

from ..backends import RecordedBackend, RecordedReply
from ..canonical import digest
from ..checkpoints.store import CheckpointRecord, Decision
from ..core import load_pipeline_spec, new_run, spec_digest, transcript_digest
from ..core.types import Message, RunStatus, TERMINAL_STATUSES
from ..runtime import Completion
from ..toolkit.registry import ToolError, ToolResult
from .events import EVENTS_FILE, EventLog, ProvenanceError, ProvenanceEvent, read_events
from .manifest import RunManifest

if TYPE_CHECKING:  # pragma: no cover - the engine imports this module at runtime
    from ..orchestrator.engine import RunResult

logger = logging.getLogger(__name__)

_TERMINAL_VALUES = {status.value for status in TERMINAL_STATUSES}

# decided_by labels the engine assigns when a decision came from policy
# fallback rather than from the decision source; on replay the source must
# answer None so the engine takes the identical path.
_POLICY_DECIDERS = ("policy:auto-approve-after", "policy:abort-after", "source:closed")


class ReplayError(ProvenanceError):
    """The recording cannot drive a faithful re-execution."""


class TamperError(ReplayError):
    """Recorded artifacts fail their digest or continuity checks."""


@dataclass
class VerifyReport:
    """Outcome of checking a run directory against its manifest."""

    run_dir: str
    event_count: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_dir": self.run_dir,
            "event_count": self.event_count,
            "ok": self.ok,
            "violations": list(self.violations),
        }


def verify(manifest: RunManifest, log: EventLog) -> VerifyReport:
    """Check seq continuity, per-event digests, and the manifest's digests.

    Never raises for bad artifacts; every problem becomes a line in the
    report so one pass surfaces all of them.
    """
    report = VerifyReport(run_dir=str(log.dir))
    try:
        events = read_events(log.dir / EVENTS_FILE)
    except (ProvenanceError, OSError) as exc:
        report.violations.append(f"unreadable event log: {exc}")
        return report
    report.event_count = len(events)

    expected = 1
    for event in events:
        if event.seq != expected:
            report.violations.append(f"seq gap: expected {expected}, found {event.seq}")
            expected = event.seq + 1  # resync so one gap yields one violation
        else:
            expected += 1
        if digest(event.payload) != event.payload_digest:
            report.violations.append(
                f"event {event.seq} ({event.kind}): payload does not match its digest"
            )

    if manifest.event_count != len(events):
        report.violations.append(
            f"manifest records {manifest.event_count} events but the log has {len(events)}"
        )

    try:
        messages = [Message.from_dict(e.payload) for e in events if e.kind == "message"]
    except Exception as exc:  # tampered payloads may not even deserialize
        report.violations.append(f"transcript cannot be reconstructed: {exc}")
    else:
        recomputed = transcript_digest(messages)
        if recomputed != manifest.transcript_digest:
            report.violations.append(
                "transcript digest mismatch: recomputed "
                f"{recomputed[:12]}… vs manifest {manifest.transcript_digest[:12]}…"
            )

    try:
        spec = load_pipeline_spec(log.read_spec_copy())
    except Exception as exc:
        report.violations.append(f"unreadable spec copy: {exc}")
    else:
        recomputed = spec_digest(spec)
        if recomputed != manifest.spec_digest:
            report.violations.append(
                "spec copy digest mismatch: recomputed "
                f"{recomputed[:12]}… vs manifest {manifest.spec_digest[:12]}…"
            )

    statuses = [e.payload.get("status") for e in events if e.kind == "run-status"]
    terminal = [s for s in statuses if s in _TERMINAL_VALUES]
    if len(terminal) != 1:
        report.violations.append(
            f"expected exactly one terminal run-status event, found {len(terminal)}"
        )
    elif statuses[-1] != manifest.status:
        report.violations.append(
            f"last recorded status {statuses[-1]!r} != manifest status {manifest.status!r}"
        )

    calls = sum(1 for e in events if e.kind == "backend-call")
    replies = sum(1 for e in events if e.kind == "backend-reply")
    if calls != replies:
        report.violations.append(
            f"unbalanced backend traffic: {calls} calls vs {replies} replies"
        )

    if report.violations:
        logger.warning("verify(%s): %d violation(s)", log.dir, len(report.violations))
    return report


def replay(
    manifest: RunManifest,
    log: EventLog,
    out_root: Optional[Path] = None,
    window: Optional[int] = None,
    loop_limit: Optional[int] = None,
) -> "RunResult":
    """Re-execute a recorded run and prove the reconstruction by digest.

    The run is rebuilt from the spec copy and seed, then driven with a
    backend, tool registry, and decision source that each serve the
    recorded exchanges in order — no network, no live tools, no human.
    The produced transcript digest must equal ``manifest.transcript_digest``
    or a :class:`TamperError` is raised.

    The re-execution writes its own run directory under *out_root* (a
    temporary, discarded one when omitted), so the source directory is
    never touched.  ``window`` and ``loop_limit`` must match the original
    invocation; the defaults cover every CLI-produced run.
    """
    from ..orchestrator.engine import DEFAULT_LOOP_LIMIT, DEFAULT_WINDOW, run_pipeline

    report = verify(manifest, log)
    if not report.ok:
        raise TamperError(
            f"{log.dir} failed verification: " + "; ".join(report.violations)
        )

    spec = load_pipeline_spec(log.read_spec_copy())
    events = log.events()
    backend = RecordedBackend(_reply_feed(events))
    decisions = _ReplayDecisions(_decision_feed(events))
    tools = _ReplayToolRegistry(_tool_feed(events), manifest.registry_digest)
    run = new_run(spec, manifest.params, manifest.seed, run_id=manifest.run_id)

    tempdir: Optional[tempfile.TemporaryDirectory] = None
    if out_root is None:
        tempdir = tempfile.TemporaryDirectory(prefix="agentloom-replay-")
        root = Path(tempdir.name)
    else:
        root = Path(out_root)
        if (root / run.run_id).resolve() == log.dir.resolve():
            raise ReplayError(f"refusing to replay {log.dir} onto itself")
    try:
        with EventLog(root, run.run_id) as out_log:
            result = run_pipeline(
                run,
                backend,
                tools,
                decisions,
                out_log,
                window=DEFAULT_WINDOW if window is None else window,
                loop_limit=DEFAULT_LOOP_LIMIT if loop_limit is None else loop_limit,
            )
    finally:
        if tempdir is not None:
            tempdir.cleanup()

    produced = result.manifest.transcript_digest
    if produced != manifest.transcript_digest:
        raise TamperError(
            f"replay of {manifest.run_id} diverged: transcript digest "
            f"{produced[:12]}… != recorded {manifest.transcript_digest[:12]}…"
        )
    logger.info("replayed %s: transcript digest reproduced", manifest.run_id)
    return result


# --------------------------------------------------------------------- feeds


def _reply_feed(events: List[ProvenanceEvent]) -> List[RecordedReply]:
    replies = []
    for event in events:
        if event.kind != "backend-reply":
            continue
        payload = event.payload
        completion = (
            Completion.from_dict(payload["completion"]) if "completion" in payload else None
        )
        replies.append(
            RecordedReply(
                agent=payload["agent"],
                completion=completion,
                error=payload.get("error", ""),
            )
        )
    return replies


def _decision_feed(events: List[ProvenanceEvent]) -> List[Tuple[str, Decision, str]]:
    feed = []
    for event in events:
        if event.kind != "checkpoint-decide":
            continue
        payload = event.payload
        if payload.get("decided_by") == "policy:auto-approve":
            continue  # the engine never consults the source for these
        feed.append(
            (
                payload["checkpoint_id"],
                Decision.from_dict(payload["decision"]),
                payload.get("decided_by", "source"),
            )
        )
    return feed


def _tool_feed(events: List[ProvenanceEvent]) -> List[Dict[str, Any]]:
    return [dict(e.payload) for e in events if e.kind == "tool-result"]


class _ReplayDecisions:
    """Serves recorded checkpoint decisions back in their original order.

    ``name`` is updated to the recorded ``decided_by`` before each answer so
    the engine attributes the decision exactly as the original run did; a
    recorded policy fallback is replayed by answering None, which makes the
    engine re-derive the same fallback.
    """

    def __init__(self, feed: List[Tuple[str, Decision, str]]) -> None:
        self._feed = list(feed)
        self.name = "replay"

    def next_decision(
        self, record: CheckpointRecord, timeout: Optional[float] = None
    ) -> Optional[Decision]:
        if not self._feed:
            raise ReplayError(
                f"recorded decisions exhausted; replay opened extra checkpoint "
                f"{record.checkpoint_id!r}"
            )
        checkpoint_id, decision, decided_by = self._feed.pop(0)
        if checkpoint_id != record.checkpoint_id:
            raise ReplayError(
                f"decision order diverged: recorded {checkpoint_id!r}, "
                f"replay opened {record.checkpoint_id!r}"
            )
        if decided_by in _POLICY_DECIDERS:
            return None
        self.name = decided_by
        return decision


class _ReplayToolRegistry:
    """Serves recorded tool results in order instead of re-running tools.

    Keeps replay fully offline even when the original run used networked
    tools.  Failed attempts are replayed as failures so the in-turn retry
    machinery walks the same path it originally did.  Divergence (a call the
    recording does not have next) surfaces as a tool failure inside the run
    and is ultimately caught by the final transcript-digest comparison.
    """

    def __init__(self, feed: List[Dict[str, Any]], registry_digest: str) -> None:
        self._feed = list(feed)
        self._digest = registry_digest

    def __contains__(self, name: str) -> bool:
        return False  # tool menus are not replayed; the recorded backend ignores them

    def names(self) -> List[str]:
        return []

    def registry_digest(self) -> str:
        return self._digest

    def invoke(self, name: str, args: Dict[str, Any], ctx: Any) -> ToolResult:
        if not self._feed:
            raise ToolError(f"recording has no further tool results (call to {name!r})")
        record = self._feed.pop(0)
        if record.get("tool") != name:
            raise ToolError(
                f"tool order diverged: recorded {record.get('tool')!r}, replay called {name!r}"
            )
        if record.get("ok"):
            return ToolResult(text=record.get("text", ""))
        raise ToolError(record.get("error", "recorded tool failure"))

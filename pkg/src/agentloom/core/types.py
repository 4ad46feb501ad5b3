"""Core domain types: agents, messages, stages, pipelines, run state.

Messages and the various spec types are immutable (frozen dataclasses holding
tuples); :class:`RunState` is the one mutable object and is only touched by the
orchestrator thread that owns the run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from ..canonical import digest, isoformat, utcnow

logger = logging.getLogger(__name__)


class SpecError(Exception):
    """A pipeline document or spec object is structurally unusable."""

    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ParameterError(ValueError):
    """A run parameter is missing, empty, or of the wrong type."""


class StateTransitionError(RuntimeError):
    """An illegal RunState status transition was attempted."""


class RunStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    AWAITING_HUMAN = "awaiting-human"
    FAILED = "failed"
    COMPLETED = "completed"
    ABORTED = "aborted"


# status -> statuses reachable from it
_STATUS_GRAPH = {
    RunStatus.PENDING: {RunStatus.RUNNING},
    RunStatus.RUNNING: {
        RunStatus.AWAITING_HUMAN,
        RunStatus.COMPLETED,
        RunStatus.FAILED,
        RunStatus.ABORTED,
    },
    RunStatus.AWAITING_HUMAN: {
        RunStatus.RUNNING,
        RunStatus.COMPLETED,
        RunStatus.FAILED,
        RunStatus.ABORTED,
    },
    RunStatus.FAILED: set(),
    RunStatus.COMPLETED: set(),
    RunStatus.ABORTED: set(),
}

TERMINAL_STATUSES = {RunStatus.COMPLETED, RunStatus.FAILED, RunStatus.ABORTED}

MESSAGE_KINDS = (
    "task",
    "agent-output",
    "tool-call",
    "tool-result",
    "human-feedback",
    "control",
)

# kinds an agent sees through its dialogue window (control/task are always added)
VISIBLE_KINDS = ("agent-output", "tool-result", "human-feedback")

SCHEDULING_MODES = ("round-robin", "sequential", "parallel-fanout")
JOIN_RULES = ("all", "first", "quorum")
EFFECTS = ("pure", "network", "filesystem")


@dataclass(frozen=True)
class Attachment:
    """Named artifact carried by a message (tables, rendered documents, ...)."""

    name: str
    media_type: str = "text/plain"
    content: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "media_type": self.media_type, "content": self.content}

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Attachment":
        return cls(
            name=doc["name"],
            media_type=doc.get("media_type", "text/plain"),
            content=doc.get("content", ""),
        )


@dataclass(frozen=True)
class Message:
    """One transcript entry.

    Attributes:
        id: sortable unique id.
        run_id: owning run.
        sender: agent name, ``"human"``, or ``"system"``.
        kind: one of :data:`MESSAGE_KINDS`.
        content: text body.
        attachments: named artifacts riding along.
        parents: ids of the messages this one derives from (acyclic by
            construction: parents always precede children).
        timestamp: UTC creation instant; excluded from transcript digests.
    """

    id: str
    run_id: str
    sender: str
    kind: str
    content: str
    attachments: Tuple[Attachment, ...] = ()
    parents: Tuple[str, ...] = ()
    timestamp: datetime = field(default_factory=utcnow)

    def __post_init__(self) -> None:
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind: {self.kind!r}")
        if self.kind == "human-feedback" and self.sender != "human":
            raise ValueError("human-feedback messages must be sent by 'human'")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "run_id": self.run_id,
            "sender": self.sender,
            "kind": self.kind,
            "content": self.content,
            "attachments": [a.to_dict() for a in self.attachments],
            "parents": list(self.parents),
            "timestamp": isoformat(self.timestamp),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Message":
        return cls(
            id=doc["id"],
            run_id=doc["run_id"],
            sender=doc["sender"],
            kind=doc["kind"],
            content=doc["content"],
            attachments=tuple(Attachment.from_dict(a) for a in doc.get("attachments", [])),
            parents=tuple(doc.get("parents", [])),
            timestamp=datetime.fromisoformat(doc["timestamp"]),
        )


@dataclass(frozen=True)
class EscalationPolicy:
    """How an agent's failures are handled.

    ``max_retries`` failed attempts are retried in place; after that the issue
    routes to ``handler_agent`` (if any), otherwise to a human checkpoint when
    ``then_human`` is set, otherwise the stage fails.
    """

    max_retries: int = 1
    handler_agent: Optional[str] = None
    then_human: bool = True

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_retries": self.max_retries,
            "handler": self.handler_agent,
            "then_human": self.then_human,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "EscalationPolicy":
        return cls(
            max_retries=doc.get("max_retries", 1),
            handler_agent=doc.get("handler"),
            then_human=doc.get("then_human", True),
        )


@dataclass(frozen=True)
class AgentSpec:
    """A typed agent: identity, role prompt, tool grants, model binding."""

    name: str
    description: str = ""
    system_message: str = ""
    tools: Tuple[str, ...] = ()
    model: str = "primary"
    escalation_policy: EscalationPolicy = field(default_factory=EscalationPolicy)
    enabled: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "system_message": self.system_message,
            "tools": list(self.tools),
            "model": self.model,
            "escalation": self.escalation_policy.to_dict(),
            "enabled": self.enabled,
        }


@dataclass(frozen=True)
class TerminationCondition:
    """When a conversation stage stops.

    Exactly one variant applies: ``sentinel`` (a token appears as a standalone
    word in an agent output), ``max-turns`` (n agent outputs), or
    ``all-spoken`` (every roster member produced >= rounds outputs).
    """

    variant: str
    token: Optional[str] = None
    turns: Optional[int] = None
    rounds: Optional[int] = None

    def __post_init__(self) -> None:
        if self.variant == "sentinel":
            if not self.token:
                raise ValueError("sentinel termination requires a non-empty token")
        elif self.variant == "max-turns":
            if not self.turns or self.turns < 1:
                raise ValueError("max-turns termination requires turns >= 1")
        elif self.variant == "all-spoken":
            if not self.rounds or self.rounds < 1:
                raise ValueError("all-spoken termination requires rounds >= 1")
        else:
            raise ValueError(f"unknown termination variant: {self.variant!r}")

    @classmethod
    def sentinel(cls, token: str) -> "TerminationCondition":
        return cls(variant="sentinel", token=token)

    @classmethod
    def max_turns(cls, turns: int) -> "TerminationCondition":
        return cls(variant="max-turns", turns=turns)

    @classmethod
    def all_spoken(cls, rounds: int) -> "TerminationCondition":
        return cls(variant="all-spoken", rounds=rounds)

    def to_dict(self) -> Dict[str, Any]:
        if self.variant == "sentinel":
            return {"sentinel": self.token}
        if self.variant == "max-turns":
            return {"max_turns": self.turns}
        return {"all_spoken": self.rounds}


@dataclass(frozen=True)
class Binding:
    """Entry binding source: a prior stage's artifact or a run parameter."""

    kind: str  # "stage" | "param"
    ref: str

    def __post_init__(self) -> None:
        if self.kind not in ("stage", "param"):
            raise ValueError(f"unknown binding kind: {self.kind!r}")

    def to_ref(self) -> str:
        return f"{self.kind}:{self.ref}"

    @classmethod
    def parse(cls, text: str) -> "Binding":
        if ":" not in text:
            raise ValueError(f"binding must look like 'stage:<id>' or 'param:<name>', got {text!r}")
        kind, _, ref = text.partition(":")
        return cls(kind=kind, ref=ref)


@dataclass(frozen=True)
class CheckpointPolicy:
    """Blocking behaviour of a checkpoint."""

    kind: str = "block"  # block | auto-approve | auto-approve-after | abort-after
    seconds: Optional[float] = None

    def __post_init__(self) -> None:
        timed = self.kind in ("auto-approve-after", "abort-after")
        if self.kind not in ("block", "auto-approve", "auto-approve-after", "abort-after"):
            raise ValueError(f"unknown checkpoint policy: {self.kind!r}")
        if timed and (self.seconds is None or self.seconds < 0):
            raise ValueError(f"policy {self.kind} requires seconds >= 0")

    def to_dict(self) -> Dict[str, Any]:
        if self.seconds is None:
            return {"kind": self.kind}
        return {"kind": self.kind, "seconds": self.seconds}


@dataclass(frozen=True)
class CheckpointSpec:
    """A declared human review point attached to a stage."""

    id: str
    prompt: str
    payload_binding: Tuple[str, ...] = ()
    policy: CheckpointPolicy = field(default_factory=CheckpointPolicy)
    revise_rerun_default: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "prompt": self.prompt,
            "payload": list(self.payload_binding),
            "policy": self.policy.to_dict(),
            "revise_rerun_default": self.revise_rerun_default,
        }


@dataclass(frozen=True)
class FallbackSpec:
    """A partial stage override tried after a failure (same stage id)."""

    scheduling: Optional[str] = None
    model: Optional[str] = None
    termination: Optional[TerminationCondition] = None
    task: Optional[str] = None
    tool_overrides: Optional[Dict[str, Tuple[str, ...]]] = None

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {}
        if self.scheduling is not None:
            doc["scheduling"] = self.scheduling
        if self.model is not None:
            doc["model"] = self.model
        if self.termination is not None:
            doc["termination"] = self.termination.to_dict()
        if self.task is not None:
            doc["task"] = self.task
        if self.tool_overrides is not None:
            doc["tools"] = {k: list(v) for k, v in self.tool_overrides.items()}
        return doc


@dataclass(frozen=True)
class StageSpec:
    """One pipeline stage: a roster, a scheduling mode, and hand-off wiring."""

    id: str
    roster: Tuple[str, ...]
    scheduling: str = "round-robin"
    task: str = ""
    entry: Tuple[Tuple[str, Binding], ...] = ()
    termination: TerminationCondition = field(
        default_factory=lambda: TerminationCondition.all_spoken(1)
    )
    checkpoint: Optional[CheckpointSpec] = None
    fallbacks: Tuple[FallbackSpec, ...] = ()
    when: Optional[str] = None
    join: str = "all"
    quorum: Optional[int] = None
    model_override: Optional[str] = None

    def __post_init__(self) -> None:
        if self.scheduling not in SCHEDULING_MODES:
            raise ValueError(f"unknown scheduling mode: {self.scheduling!r}")
        if self.join not in JOIN_RULES:
            raise ValueError(f"unknown join rule: {self.join!r}")

    def entry_map(self) -> Dict[str, Binding]:
        return dict(self.entry)

    def with_fallback(self, fb: FallbackSpec) -> "StageSpec":
        """Stage config with a fallback's overrides applied (id preserved)."""
        updated = self
        if fb.scheduling is not None:
            updated = replace(updated, scheduling=fb.scheduling)
        if fb.termination is not None:
            updated = replace(updated, termination=fb.termination)
        if fb.task is not None:
            updated = replace(updated, task=fb.task)
        if fb.model is not None:
            updated = replace(updated, model_override=fb.model)
        return updated

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "id": self.id,
            "roster": list(self.roster),
            "scheduling": self.scheduling,
            "task": self.task,
            "entry": {name: b.to_ref() for name, b in self.entry},
            "termination": self.termination.to_dict(),
        }
        if self.checkpoint is not None:
            doc["checkpoint"] = self.checkpoint.to_dict()
        if self.fallbacks:
            doc["fallbacks"] = [f.to_dict() for f in self.fallbacks]
        if self.when is not None:
            doc["when"] = self.when
        if self.scheduling == "parallel-fanout":
            doc["join"] = self.join
            if self.quorum is not None:
                doc["quorum"] = self.quorum
        return doc


@dataclass(frozen=True)
class ParamSpec:
    """Declared run parameter."""

    name: str
    type: str = "string"  # string | int | float | bool
    required: bool = False
    default: Any = None
    description: str = ""

    def __post_init__(self) -> None:
        if self.type not in ("string", "int", "float", "bool"):
            raise ValueError(f"unknown parameter type: {self.type!r}")

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"type": self.type, "required": self.required}
        if self.default is not None:
            doc["default"] = self.default
        if self.description:
            doc["description"] = self.description
        return doc


@dataclass(frozen=True)
class PipelineSpec:
    """A complete pipeline definition."""

    name: str
    version: str
    agents: Tuple[AgentSpec, ...]
    stages: Tuple[StageSpec, ...]
    params: Tuple[ParamSpec, ...] = ()
    banner: Optional[str] = None
    concrete: bool = True
    checkpoint_count: Optional[int] = None

    def agent(self, name: str) -> AgentSpec:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def agent_names(self) -> List[str]:
        return [a.name for a in self.agents]

    def stage(self, stage_id: str) -> StageSpec:
        for s in self.stages:
            if s.id == stage_id:
                return s
        raise KeyError(stage_id)

    def stage_ids(self) -> List[str]:
        return [s.id for s in self.stages]

    def param(self, name: str) -> Optional[ParamSpec]:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def declared_checkpoints(self) -> List[CheckpointSpec]:
        return [s.checkpoint for s in self.stages if s.checkpoint is not None]


@dataclass
class RunState:
    """Mutable execution state of one pipeline run."""

    run_id: str
    spec: PipelineSpec
    spec_hash: str
    seed: int
    params: Dict[str, Any] = field(default_factory=dict)
    status: RunStatus = RunStatus.PENDING
    stage_cursor: Optional[str] = None
    transcript: List[Message] = field(default_factory=list)
    stage_artifacts: Dict[str, str] = field(default_factory=dict)
    completed_stages: List[str] = field(default_factory=list)
    skipped_stages: List[str] = field(default_factory=list)
    failed_stage: Optional[str] = None
    cause: Optional[str] = None
    started_at: datetime = field(default_factory=utcnow)

    def transition(self, new: RunStatus) -> None:
        if new not in _STATUS_GRAPH[self.status]:
            raise StateTransitionError(f"illegal transition {self.status.value} -> {new.value}")
        logger.debug("run %s: %s -> %s", self.run_id, self.status.value, new.value)
        self.status = new

    def append(self, message: Message) -> None:
        if self.transcript and not message.parents:
            raise ValueError("only the first message of a run may have no parents")
        self.transcript.append(message)

    def last_message_id(self) -> Optional[str]:
        return self.transcript[-1].id if self.transcript else None

    def artifact_message(self, stage_id: str) -> Optional[Message]:
        ref = self.stage_artifacts.get(stage_id)
        if ref is None:
            return None
        for m in self.transcript:
            if m.id == ref:
                return m
        return None

    def summary(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "pipeline": self.spec.name,
            "status": self.status.value,
            "stage_cursor": self.stage_cursor,
            "completed_stages": list(self.completed_stages),
            "messages": len(self.transcript),
            "seed": self.seed,
            "started_at": isoformat(self.started_at),
        }


def transcript_digest(messages: List[Message]) -> str:
    """Digest of a transcript; timestamps are excluded by the canonical rule."""
    return digest([m.to_dict() for m in messages])

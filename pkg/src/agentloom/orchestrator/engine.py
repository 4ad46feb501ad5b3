"""The run driver.

``run_pipeline`` takes a pending run and drives it to a terminal status:
stage by stage, speaker by speaker, opening checkpoints where declared,
routing failures through retry / handler-consult / human-rescue / fallback,
and mirroring every step into the provenance log *before* applying it.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

from ..canonical import Clock
from ..checkpoints.store import CheckpointRecord, CheckpointStore, Decision
from ..core.document import serialize_pipeline_spec
from ..core.types import (
    AgentSpec,
    CheckpointPolicy,
    Message,
    RunState,
    RunStatus,
    StageSpec,
)
from ..ids import IdSource
from ..provenance.events import EventLog, ProvenanceEvent
from ..provenance.manifest import RunManifest, write_manifest
from ..runtime import (
    DEFAULT_LOOP_LIMIT,
    DEFAULT_WINDOW,
    DecodeSettings,
    ModelRequest,
    TurnOutcome,
    TurnRecorder,
    step_agent,
)
from ..toolkit.registry import ToolContext, ToolRegistry
from .escalation import (
    EscalationEvent,
    FallbacksExhausted,
    apply_adaptive_fallback,
    classify_and_escalate,
)
from .scheduling import check_termination, next_speaker

logger = logging.getLogger(__name__)


class EngineError(RuntimeError):
    """The engine was invoked on a run it cannot drive."""


class _MissingArtifact(RuntimeError):
    """An entry binding points at a stage that produced nothing."""


@dataclass
class RunResult:
    """What a finished run looked like, in engine-measured counts."""

    run: RunState
    manifest: Optional[RunManifest]
    messages: int
    agent_outputs: int
    tool_calls: int
    checkpoints: int
    escalations: int
    stages_completed: List[str]
    stages_skipped: List[str]
    failed_stage: Optional[str]
    wall_seconds: float

    @property
    def ok(self) -> bool:
        return self.run.status == RunStatus.COMPLETED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run.run_id,
            "status": self.run.status.value,
            "messages": self.messages,
            "agent_outputs": self.agent_outputs,
            "tool_calls": self.tool_calls,
            "checkpoints": self.checkpoints,
            "escalations": self.escalations,
            "stages_completed": list(self.stages_completed),
            "stages_skipped": list(self.stages_skipped),
            "failed_stage": self.failed_stage,
            "cause": self.run.cause,
            "wall_seconds": self.wall_seconds,
        }


def render_task(template: str, params: Dict[str, Any]) -> str:
    """Substitute ``{param}`` placeholders; unknown braces are left alone."""
    out = template
    for key, value in params.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def stage_inputs(run: RunState, stage: StageSpec) -> Dict[str, str]:
    """Resolve a stage's entry bindings to text.

    Parameters resolve to their bound values; stage bindings resolve to the
    artifact message of the named stage.  A binding to a skipped stage is
    silently omitted, a binding to anything else that never produced an
    artifact is an error (the stage cannot start).
    """
    bundle: Dict[str, str] = {}
    for name, binding in stage.entry:
        if binding.kind == "param":
            value = run.params.get(binding.ref)
            bundle[name] = "" if value is None else str(value)
        else:
            artifact = run.artifact_message(binding.ref)
            if artifact is None:
                if binding.ref in run.skipped_stages:
                    continue
                raise _MissingArtifact(
                    f"stage {stage.id!r} needs {name!r} from stage {binding.ref!r}, "
                    "which produced no artifact"
                )
            bundle[name] = artifact.content
    return bundle


class _Recorder(TurnRecorder):
    """Mirrors turn activity into provenance events."""

    def __init__(self, engine: "_Engine") -> None:
        self.engine = engine

    def on_backend_call(self, request: ModelRequest, turn_index: int) -> None:
        self.engine._emit("backend-call", request.agent, request.to_dict())

    def on_backend_reply(self, request, turn_index, completion, error="") -> None:
        payload: Dict[str, Any] = {"agent": request.agent, "turn_index": turn_index}
        if completion is not None:
            payload["completion"] = completion.to_dict()
        if error:
            payload["error"] = error
        self.engine._emit("backend-reply", request.agent, payload)

    def on_tool_invoke(self, agent, name, args, attempt) -> None:
        self.engine.tool_calls += 1
        self.engine._emit(
            "tool-invoke", agent, {"agent": agent, "tool": name, "args": args, "attempt": attempt}
        )

    def on_tool_result(self, agent, name, attempt, ok, text="", error="") -> None:
        payload: Dict[str, Any] = {"agent": agent, "tool": name, "attempt": attempt, "ok": ok}
        if ok:
            payload["text"] = text
        else:
            payload["error"] = error
        self.engine._emit("tool-result", agent, payload)


class _Engine:
    def __init__(
        self,
        run: RunState,
        backend: Any,
        registry: ToolRegistry,
        decisions: Any,
        log: EventLog,
        store: CheckpointStore,
        toolctx: Optional[ToolContext],
        window: int,
        loop_limit: int,
        listeners: Sequence[Callable[[ProvenanceEvent], None]],
    ) -> None:
        self.run = run
        self.backend = backend
        self.registry = registry
        self.decisions = decisions
        self.log = log
        self.store = store
        self.window = window
        self.loop_limit = loop_limit
        self.listeners = list(listeners)
        self.ids = IdSource(run.seed)
        self.clock = Clock()
        self.toolctx = toolctx or ToolContext(backend=backend, seed=run.seed)
        self.recorder = _Recorder(self)
        self.tool_calls = 0
        self.escalations = 0
        self._consulted: Set[Tuple[str, str]] = set()
        self._rescues: Dict[Tuple[str, str], int] = {}
        self._prefetched: Dict[str, Tuple[str, Optional[str]]] = {}
        self._cause: Optional[str] = None

    # ------------------------------------------------------------------ plumbing

    def _emit(self, kind: str, actor: str, payload: Dict[str, Any]) -> None:
        event = ProvenanceEvent.build(
            seq=self.log.next_seq, kind=kind, actor=actor, payload=payload, time=self.clock.now()
        )
        self.log.append(event)
        for listener in self.listeners:
            try:
                listener(event)
            except Exception:  # a broken listener must not kill the run
                logger.exception("event listener failed")

    def _status(self, new: RunStatus) -> None:
        self._emit(
            "run-status",
            "orchestrator",
            {"status": new.value, "from": self.run.status.value},
        )
        self.run.transition(new)

    def _append(self, message: Message) -> None:
        self._emit("message", message.sender, message.to_dict())
        self.run.append(message)

    def _message(self, sender: str, kind: str, content: str, parents: Tuple[str, ...]) -> Message:
        return Message(
            id=self.ids.next("msg"),
            run_id=self.run.run_id,
            sender=sender,
            kind=kind,
            content=content,
            parents=parents,
            timestamp=self.clock.now(),
        )

    def _tail(self) -> Tuple[str, ...]:
        last = self.run.last_message_id()
        return (last,) if last else ()

    def _control(self, text: str) -> None:
        self._append(self._message("system", "control", text, self._tail()))

    # ------------------------------------------------------------------ main loop

    def execute(self) -> RunResult:
        if self.run.status != RunStatus.PENDING:
            raise EngineError(
                f"run {self.run.run_id} is {self.run.status.value}; only pending runs start"
            )
        started = time.monotonic()
        self.log.write_spec_copy(serialize_pipeline_spec(self.run.spec))
        self._status(RunStatus.RUNNING)

        final = RunStatus.COMPLETED
        try:
            for stage in self.run.spec.stages:
                if stage.id in self._prefetched:
                    result, cause = self._prefetched.pop(stage.id)
                elif stage.id in self.run.completed_stages or stage.id in self.run.skipped_stages:
                    continue
                else:
                    self.run.stage_cursor = stage.id
                    result, cause = self._run_stage(stage)
                if result == "aborted":
                    final = RunStatus.ABORTED
                    self._cause = cause
                    break
                if result == "failed":
                    final = RunStatus.FAILED
                    self._cause = cause
                    break
        except Exception as exc:  # never leave a run non-terminal
            logger.exception("run %s: internal failure", self.run.run_id)
            final = RunStatus.FAILED
            self._cause = f"internal error: {exc}"
            if self.run.failed_stage is None:
                self.run.failed_stage = self.run.stage_cursor

        if self._cause:
            self.run.cause = self._cause
        if final == RunStatus.COMPLETED:
            self.run.stage_cursor = None
        self._status(final)
        manifest = write_manifest(
            self.run,
            self.log,
            backend_descriptor=self._describe_backend(),
            registry_digest=self.registry.registry_digest(),
        )

        transcript = self.run.transcript
        return RunResult(
            run=self.run,
            manifest=manifest,
            messages=len(transcript),
            agent_outputs=sum(1 for m in transcript if m.kind == "agent-output"),
            tool_calls=self.tool_calls,
            checkpoints=len(self.store.records(self.run.run_id)),
            escalations=self.escalations,
            stages_completed=list(self.run.completed_stages),
            stages_skipped=list(self.run.skipped_stages),
            failed_stage=self.run.failed_stage,
            wall_seconds=time.monotonic() - started,
        )

    def _describe_backend(self) -> Dict[str, Any]:
        describe = getattr(self.backend, "describe", None)
        if callable(describe):
            return describe()
        return {"kind": type(self.backend).__name__}

    # ------------------------------------------------------------------ stages

    def _run_stage(self, stage: StageSpec) -> Tuple[str, Optional[str]]:
        """Drive one stage through fallbacks and its checkpoint."""
        if stage.when is not None and not self.run.params.get(stage.when):
            self._control(f"[stage {stage.id}] skipped ({stage.when!r} not provided)")
            self.run.skipped_stages.append(stage.id)
            return "skipped", None

        failure_count = 0
        config = stage
        overrides: Optional[Dict[str, Tuple[str, ...]]] = None
        while True:
            result, cause = self._stage_body(config, overrides)
            if result == "completed":
                result, cause = self._stage_checkpoint(stage, config, overrides)
            if result == "completed":
                self.run.completed_stages.append(stage.id)
                return "completed", None
            if result == "aborted":
                return "aborted", cause
            failure_count += 1
            try:
                config = apply_adaptive_fallback(stage, failure_count)
            except FallbacksExhausted:
                self.run.failed_stage = stage.id
                return "failed", cause
            fb = stage.fallbacks[failure_count - 1]
            overrides = fb.tool_overrides
            self._control(
                f"[stage {stage.id}] fallback {failure_count} engaged: "
                + json.dumps(fb.to_dict(), sort_keys=True)
            )

    def _stage_body(
        self,
        config: StageSpec,
        overrides: Optional[Dict[str, Tuple[str, ...]]],
        task_override: Optional[str] = None,
    ) -> Tuple[str, Optional[str]]:
        """Execute the conversational part of a stage (no checkpoint)."""
        try:
            bundle = stage_inputs(self.run, config)
        except _MissingArtifact as exc:
            return "failed", str(exc)

        parts = [render_task(task_override or config.task, self.run.params)]
        for name, text in bundle.items():
            parts.append(f"[{name}]\n{text}")
        task_text = "\n\n".join(p for p in parts if p)

        stage_start = len(self.run.transcript)
        self._append(self._message("system", "task", task_text, self._tail()))

        if config.scheduling == "parallel-fanout":
            return self._fanout(config, task_text, overrides, stage_start)

        excused: Set[str] = set()
        cond = config.termination
        cap = max(
            64,
            16 * len(config.roster),
            2 * (cond.turns or 0),
            4 * len(config.roster) * (cond.rounds or 0),
        )
        last: Optional[str] = None
        turns = 0
        sequential = config.scheduling == "sequential"
        order = list(config.roster)

        while True:
            effective = [name for name in config.roster if name not in excused]
            if not effective:
                return "failed", f"stage {config.id}: every roster agent was excused"
            if check_termination(self.run.transcript, cond, stage_start, roster=effective):
                break
            if sequential and turns >= len(order):
                break
            if turns >= cap:
                return "failed", f"stage {config.id}: no termination after {turns} turns"
            if sequential:
                speaker = order[turns]
                if speaker in excused:
                    turns += 1
                    continue
            else:
                speaker = next_speaker(config.roster, last, disabled=excused)
            last = speaker
            turns += 1
            status, _ = self._turn(config, self.run.spec.agent(speaker), task_text, overrides)
            if status == "excused":
                excused.add(speaker)
            elif status == "aborted":
                return "aborted", self._cause
            elif status != "ok":
                return "failed", f"stage {config.id}: {speaker} failed"

        artifact = _last_output(self.run.transcript, stage_start)
        if artifact is None:
            return "failed", f"stage {config.id} produced no agent output"
        self.run.stage_artifacts[config.id] = artifact.id
        return "completed", None

    def _fanout(
        self,
        config: StageSpec,
        task_text: str,
        overrides: Optional[Dict[str, Tuple[str, ...]]],
        stage_start: int,
    ) -> Tuple[str, Optional[str]]:
        """Run each roster agent once against the pre-stage transcript.

        Branch messages are buffered during execution and committed in roster
        order, so the transcript is deterministic even though branches are
        conceptually concurrent.
        """
        snapshot = list(self.run.transcript)
        need = len(config.roster)
        if config.join == "first":
            need = 1
        elif config.join == "quorum":
            need = config.quorum or len(config.roster)

        branches: List[Tuple[str, str, List[Message], Optional[Message]]] = []
        successes = 0
        for speaker in config.roster:
            buffer: List[Message] = []
            status, outcome = self._turn(
                config,
                self.run.spec.agent(speaker),
                task_text,
                overrides,
                transcript=snapshot,
                append=buffer.append,
                fanout=True,
            )
            branches.append((speaker, status, buffer, outcome.output))
            if status == "ok":
                successes += 1
                if config.join in ("first", "quorum") and successes >= need:
                    break
            elif status == "aborted":
                return "aborted", self._cause

        artifact: Optional[Message] = None
        for speaker, status, buffer, output in branches:
            for msg in buffer:
                self._append(msg)
            if status == "ok" and output is not None:
                artifact = output

        if successes < need:
            failed = [s for s, status, _, _ in branches if status != "ok"]
            return "failed", (
                f"stage {config.id}: join={config.join} needed {need} result(s), "
                f"got {successes} (failed: {', '.join(failed)})"
            )
        if artifact is None:
            return "failed", f"stage {config.id} produced no agent output"
        self.run.stage_artifacts[config.id] = artifact.id
        return "completed", None

    # ------------------------------------------------------------------ turns

    def _turn(
        self,
        config: StageSpec,
        agent: AgentSpec,
        task_text: str,
        overrides: Optional[Dict[str, Tuple[str, ...]]],
        transcript: Optional[Sequence[Message]] = None,
        append: Optional[Callable[[Message], None]] = None,
        fanout: bool = False,
    ) -> Tuple[str, TurnOutcome]:
        """One agent turn plus the escalation handling around it.

        Returns ("ok" | "failed" | "aborted" | "excused", outcome).
        """
        if overrides and agent.name in overrides:
            agent = replace(agent, tools=tuple(overrides[agent.name]))
        policy = agent.escalation_policy
        attempt = 1
        while True:
            outcome = step_agent(
                agent,
                transcript=transcript if transcript is not None else self.run.transcript,
                task=task_text,
                backend=self.backend,
                registry=self.registry,
                toolctx=self.toolctx,
                new_id=self.ids.next,
                now=self.clock.now,
                run_id=self.run.run_id,
                append=append or self._append,
                recorder=self.recorder,
                window=self.window,
                loop_limit=self.loop_limit,
                decode=DecodeSettings(seed=self.run.seed),
                model_override=config.model_override,
            )
            if outcome.ok:
                return "ok", outcome

            event = outcome.escalation
            if event.issue != "tool-failure":
                # tool failures carry their own attempt count from the retry
                # loop inside the turn; everything else is retried turn-wise.
                event = replace(event, attempt=attempt)
            action = classify_and_escalate(event, policy)
            if action.variant == "retry":
                attempt += 1
                continue

            if fanout:
                self._escalation(config, event, action, applied="branch-failed")
                return "failed", outcome

            if action.variant == "route-to-agent":
                key = (config.id, agent.name)
                if key in self._consulted:
                    applied = "route-to-human" if policy.then_human else "fail-stage"
                    self._escalation(
                        config, event, action, applied=applied, note="handler already consulted"
                    )
                    if applied == "fail-stage":
                        return "failed", outcome
                    verdict = self._human_rescue(config, agent, event)
                else:
                    self._consulted.add(key)
                    self._escalation(config, event, action, applied="route-to-agent")
                    if self._consult_handler(config, agent, action.target, event):
                        attempt = 1
                        continue
                    return "failed", outcome
            elif action.variant == "route-to-human":
                self._escalation(config, event, action, applied="route-to-human")
                verdict = self._human_rescue(config, agent, event)
            else:  # fail-stage
                self._escalation(config, event, action, applied="fail-stage")
                return "failed", outcome

            if verdict == "retry":
                attempt = 1
                continue
            return verdict, outcome

    def _escalation(self, config, event: EscalationEvent, action, applied: str, note: str = "") -> None:
        self.escalations += 1
        payload = {
            "stage": config.id,
            "event": event.to_dict(),
            "action": action.to_dict(),
            "applied": applied,
        }
        if note:
            payload["note"] = note
        self._emit("escalation", event.source_agent, payload)

    def _consult_handler(
        self, config: StageSpec, agent: AgentSpec, target: str, event: EscalationEvent
    ) -> bool:
        """One-shot handler turn; True when the handler produced guidance."""
        handler = self.run.spec.agent(target)
        self._control(
            f"[escalation] consulting {target} after {agent.name} hit {event.issue}"
        )
        consult_task = (
            f"{agent.name} ran into {event.issue}: {event.detail}\n"
            "Review the recent messages, diagnose the problem, and reply with "
            "concrete guidance for fixing it."
        )
        outcome = step_agent(
            handler,
            transcript=self.run.transcript,
            task=consult_task,
            backend=self.backend,
            registry=self.registry,
            toolctx=self.toolctx,
            new_id=self.ids.next,
            now=self.clock.now,
            run_id=self.run.run_id,
            append=self._append,
            recorder=self.recorder,
            window=self.window,
            loop_limit=self.loop_limit,
            decode=DecodeSettings(seed=self.run.seed),
            model_override=config.model_override,
        )
        if not outcome.ok:
            self._escalation(
                config,
                outcome.escalation,
                classify_and_escalate(outcome.escalation, handler.escalation_policy),
                applied="fail-stage",
                note=f"handler {target} failed too",
            )
        return outcome.ok

    def _human_rescue(self, config: StageSpec, agent: AgentSpec, event: EscalationEvent) -> str:
        """Open a rescue checkpoint for a struggling agent.

        approve → the agent is excused from the stage; revise → its turn is
        retried with the feedback visible; abort → the run aborts.
        """
        key = (config.id, agent.name)
        ordinal = self._rescues.get(key, 0) + 1
        self._rescues[key] = ordinal
        checkpoint_id = f"escalation-{config.id}-{agent.name}"
        if ordinal > 1:
            checkpoint_id += f"-{ordinal}"
        record = self.store.open(
            record_id=self.ids.next("cp"),
            checkpoint_id=checkpoint_id,
            run_id=self.run.run_id,
            stage_id=config.id,
            prompt=f"{agent.name} needs help in stage {config.id}: {event.issue}",
            payload={
                "agent": agent.name,
                "issue": event.issue,
                "detail": event.detail,
                "attempt": event.attempt,
            },
        )
        self._emit("checkpoint-open", agent.name, record.to_dict())
        self._status(RunStatus.AWAITING_HUMAN)
        decision, decided_by = self._resolve_decision(record, CheckpointPolicy())
        self._emit(
            "checkpoint-decide",
            decided_by,
            {
                "record_id": record.record_id,
                "checkpoint_id": checkpoint_id,
                "stage": config.id,
                "decision": decision.to_dict(),
                "decided_by": decided_by,
            },
        )
        if decision.kind == "abort":
            self._cause = f"aborted at rescue checkpoint {checkpoint_id} by {decided_by}"
            return "aborted"
        self._status(RunStatus.RUNNING)
        if decision.kind == "approve":
            self._control(
                f"[escalation] {agent.name} excused from stage {config.id} "
                f"(approved by {decided_by})"
            )
            return "excused"
        self._append(
            self._message("human", "human-feedback", decision.feedback, self._tail())
        )
        return "retry"

    # ------------------------------------------------------------------ checkpoints

    def _stage_checkpoint(
        self,
        stage: StageSpec,
        config: StageSpec,
        overrides: Optional[Dict[str, Tuple[str, ...]]],
    ) -> Tuple[str, Optional[str]]:
        cp = stage.checkpoint
        if cp is None:
            return "completed", None
        already = any(
            r.checkpoint_id == cp.id for r in self.store.records(self.run.run_id)
        )
        if already:
            # a fallback re-run after the checkpoint was decided; never re-review
            return "completed", None

        refs = cp.payload_binding or (stage.id,)
        artifacts: Dict[str, str] = {}
        for ref in refs:
            msg = self.run.artifact_message(ref)
            artifacts[ref] = msg.content if msg else ""
        payload = {
            "text": "\n\n".join(f"[{ref}]\n{text}" for ref, text in artifacts.items()),
            "artifacts": artifacts,
        }
        record = self.store.open(
            record_id=self.ids.next("cp"),
            checkpoint_id=cp.id,
            run_id=self.run.run_id,
            stage_id=stage.id,
            prompt=cp.prompt,
            payload=payload,
        )
        self._emit("checkpoint-open", "orchestrator", record.to_dict())
        self._status(RunStatus.AWAITING_HUMAN)
        if cp.policy.kind != "auto-approve":
            self._lookahead(stage)
        decision, decided_by = self._resolve_decision(record, cp.policy)
        self._emit(
            "checkpoint-decide",
            decided_by,
            {
                "record_id": record.record_id,
                "checkpoint_id": cp.id,
                "stage": stage.id,
                "decision": decision.to_dict(),
                "decided_by": decided_by,
            },
        )
        if decision.kind == "abort":
            return "aborted", f"aborted at checkpoint {cp.id} by {decided_by}"
        self._status(RunStatus.RUNNING)
        if decision.kind == "approve":
            return "completed", None

        self._append(
            self._message("human", "human-feedback", decision.feedback, self._tail())
        )
        rerun = decision.rerun if decision.rerun is not None else cp.revise_rerun_default
        if not rerun:
            return "completed", None
        result, cause = self._stage_body(config, overrides, task_override=decision.revised_task)
        return result, cause

    def _resolve_decision(
        self, record: CheckpointRecord, policy: CheckpointPolicy
    ) -> Tuple[Decision, str]:
        decision: Optional[Decision] = None
        decided_by = ""
        if policy.kind == "auto-approve":
            decision = Decision(kind="approve")
            decided_by = "policy:auto-approve"
        else:
            timed = policy.kind in ("auto-approve-after", "abort-after")
            timeout = policy.seconds if timed else None
            if self.decisions is not None:
                decision = self.decisions.next_decision(record, timeout=timeout)
                decided_by = getattr(self.decisions, "name", "source")
            if decision is None:
                if policy.kind == "auto-approve-after":
                    decision = Decision(kind="approve")
                    decided_by = "policy:auto-approve-after"
                elif policy.kind == "abort-after":
                    decision = Decision(kind="abort")
                    decided_by = "policy:abort-after"
                else:
                    decision = Decision(kind="abort")
                    decided_by = "source:closed"

        current = self.store.get(record.record_id)
        if current.decision is None:
            self.store.decide(record.record_id, decision, decided_by)
            return decision, decided_by
        # an API thread got there first; its answer stands
        return current.decision, current.decided_by

    # ------------------------------------------------------------------ look-ahead

    def _transitive_deps(self, stage: StageSpec) -> Set[str]:
        deps: Set[str] = set()
        queue = [b.ref for _, b in stage.entry if b.kind == "stage"]
        while queue:
            ref = queue.pop()
            if ref in deps:
                continue
            deps.add(ref)
            upstream = self.run.spec.stage(ref)
            queue.extend(b.ref for _, b in upstream.entry if b.kind == "stage")
        return deps

    def _lookahead(self, blocked: StageSpec) -> None:
        """While a checkpoint waits, run later stages that don't depend on it.

        Qualifying stages have no checkpoint of their own and all their
        (transitive) entry dependencies already completed.
        """
        ids = self.run.spec.stage_ids()
        start = ids.index(blocked.id) + 1
        progressed = True
        while progressed:
            progressed = False
            for stage in self.run.spec.stages[start:]:
                if (
                    stage.id in self._prefetched
                    or stage.id in self.run.completed_stages
                    or stage.id in self.run.skipped_stages
                ):
                    continue
                if stage.checkpoint is not None:
                    continue
                deps = self._transitive_deps(stage)
                if blocked.id in deps:
                    continue
                if not all(d in self.run.completed_stages for d in deps):
                    continue
                logger.debug(
                    "run %s: executing %s while %s awaits review",
                    self.run.run_id,
                    stage.id,
                    blocked.id,
                )
                result = self._run_stage(stage)
                if result[0] not in ("completed", "skipped"):
                    self._prefetched[stage.id] = result
                    return  # don't run further stages past a failure
                progressed = True


def _last_output(transcript: Sequence[Message], stage_start: int) -> Optional[Message]:
    for msg in reversed(transcript[stage_start:]):
        if msg.kind == "agent-output":
            return msg
    return None


def run_pipeline(
    run: RunState,
    backend: Any,
    tools: ToolRegistry,
    decisions: Any,
    log: EventLog,
    checkpoint_store: Optional[CheckpointStore] = None,
    toolctx: Optional[ToolContext] = None,
    window: int = DEFAULT_WINDOW,
    loop_limit: int = DEFAULT_LOOP_LIMIT,
    listeners: Sequence[Callable[[ProvenanceEvent], None]] = (),
) -> RunResult:
    """Drive *run* from pending to a terminal status.

    Every state change is preceded by exactly one provenance event in *log*;
    checkpoint decisions are pulled from *decisions* (or pushed through
    *checkpoint_store* by another thread of control, e.g. the HTTP API).
    """
    engine = _Engine(
        run=run,
        backend=backend,
        registry=tools,
        decisions=decisions,
        log=log,
        store=checkpoint_store or CheckpointStore(),
        toolctx=toolctx,
        window=window,
        loop_limit=loop_limit,
        listeners=listeners,
    )
    return engine.execute()

"""End-to-end engine behaviour with scripted backends and decisions."""

import textwrap

import pytest

from agentloom.backends import ScriptedBackend, script_from_doc
from agentloom.checkpoints.sources import AutoApproveSource, ScriptedDecisionSource
from agentloom.checkpoints.store import CheckpointStore, Decision
from agentloom.core import load_pipeline_spec, new_run
from agentloom.core.types import RunStatus, transcript_digest
from agentloom.orchestrator.engine import run_pipeline
from agentloom.provenance.events import EventLog
from agentloom.toolkit.registry import (
    ToolParam,
    ToolRegistry,
    ToolResult,
    ToolSpec,
)


def _registry(fail_tool_times=None):
    """A tiny registry: echo always works, flaky fails the first N calls."""
    registry = ToolRegistry()
    registry.register(
        ToolSpec(name="echo", description="Echo the given text.",
                 params=(ToolParam("text", "string"),), result="the same text"),
        lambda args, ctx: ToolResult(text=args.get("text", "")),
    )
    state = {"left": fail_tool_times or 0}

    def flaky(args, ctx):
        if state["left"] > 0:
            state["left"] -= 1
            raise RuntimeError("flaky tool: transient failure")
        return ToolResult(text="flaky ok")

    registry.register(
        ToolSpec(name="flaky", description="Fails a configured number of times.",
                 result="eventually ok"),
        flaky,
    )
    return registry


def _run(doc, script_doc, decisions=None, params=None, seed=11, tmp_path=None, strict=True,
         registry=None, store=None):
    spec = load_pipeline_spec(textwrap.dedent(doc))
    script = dict(script_doc)
    script.setdefault("format_version", 1)
    script.setdefault("strict", strict)
    backend = ScriptedBackend(script_from_doc(script))
    run = new_run(spec, params or {}, seed=seed)
    log = EventLog(tmp_path, run.run_id)
    store = store or CheckpointStore()
    result = run_pipeline(
        run,
        backend,
        registry or _registry(),
        decisions if decisions is not None else AutoApproveSource(),
        log,
        checkpoint_store=store,
    )
    return result, log, store


SOLO_DOC = """
name: solo
version: "1"
agents:
  - name: Solo
    system_message: You are Solo. End with DONE.
stages:
  - id: only
    roster: [Solo]
    scheduling: round-robin
    task: Say something useful.
    termination: {sentinel: DONE}
"""


class TestMinimalRun:
    def test_completed_with_task_plus_one_output(self, tmp_path):
        result, log, _ = _run(
            SOLO_DOC,
            {"entries": [{"agent": "Solo", "turn": 0, "text": "All set. DONE"}]},
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        kinds = [m.kind for m in result.run.transcript]
        assert kinds == ["task", "agent-output"]
        assert result.run.transcript[1].content == "All set. DONE"
        assert result.agent_outputs == 1
        assert result.messages == 2
        assert result.ok

    def test_exactly_one_status_event_per_transition(self, tmp_path):
        result, log, _ = _run(
            SOLO_DOC,
            {"entries": [{"agent": "Solo", "turn": 0, "text": "All set. DONE"}]},
            tmp_path=tmp_path,
        )
        status_events = [e for e in log.events() if e.kind == "run-status"]
        assert [(e.payload["from"], e.payload["status"]) for e in status_events] == [
            ("pending", "running"),
            ("running", "completed"),
        ]

    def test_manifest_written_and_digests_agree(self, tmp_path):
        result, log, _ = _run(
            SOLO_DOC,
            {"entries": [{"agent": "Solo", "turn": 0, "text": "All set. DONE"}]},
            tmp_path=tmp_path,
        )
        m = result.manifest
        assert m is not None
        assert m.transcript_digest == transcript_digest(result.run.transcript)
        assert m.event_count == log.last_seq
        assert m.backend["kind"] == "scripted"
        assert (log.dir / "manifest.json").exists()
        assert (log.dir / "pipeline.yaml").exists()

    def test_message_events_mirror_transcript_in_order(self, tmp_path):
        result, log, _ = _run(
            SOLO_DOC,
            {"entries": [{"agent": "Solo", "turn": 0, "text": "All set. DONE"}]},
            tmp_path=tmp_path,
        )
        event_ids = [e.payload["id"] for e in log.events() if e.kind == "message"]
        assert event_ids == [m.id for m in result.run.transcript]

    def test_non_pending_run_rejected(self, tmp_path):
        spec = load_pipeline_spec(textwrap.dedent(SOLO_DOC))
        run = new_run(spec, {}, seed=1)
        run.transition(RunStatus.RUNNING)
        log = EventLog(tmp_path, run.run_id)
        with pytest.raises(Exception):
            run_pipeline(run, ScriptedBackend(), _registry(), AutoApproveSource(), log)


TRIO_DOC = """
name: trio
version: "1"
agents:
  - name: Theorist
    system_message: You develop theory.
  - name: ModelDesigner
    system_message: You design models.
  - name: Calibrator
    system_message: You calibrate.
stages:
  - id: discuss
    roster: [Theorist, ModelDesigner, Calibrator]
    scheduling: round-robin
    task: Discuss the framework.
    termination: {all_spoken: 2}
"""


class TestSchedulingFairness:
    def test_all_spoken_two_rounds_exact(self, tmp_path):
        result, _, _ = _run(
            TRIO_DOC,
            {"entries": [{"agent": a, "turn": "*", "text": f"{a} speaks."}
                         for a in ("Theorist", "ModelDesigner", "Calibrator")]},
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        outputs = [m.sender for m in result.run.transcript if m.kind == "agent-output"]
        assert outputs == [
            "Theorist", "ModelDesigner", "Calibrator",
            "Theorist", "ModelDesigner", "Calibrator",
        ]

    def test_identical_seed_identical_transcript_digest(self, tmp_path):
        script = {"entries": [{"agent": a, "turn": "*", "text": f"{a} speaks."}
                              for a in ("Theorist", "ModelDesigner", "Calibrator")]}
        r1, _, _ = _run(TRIO_DOC, script, seed=42, tmp_path=tmp_path / "a")
        r2, _, _ = _run(TRIO_DOC, script, seed=42, tmp_path=tmp_path / "b")
        assert transcript_digest(r1.run.transcript) == transcript_digest(r2.run.transcript)
        assert r1.run.run_id == r2.run.run_id

    def test_different_seed_different_ids(self, tmp_path):
        script = {"entries": [{"agent": a, "turn": "*", "text": f"{a} speaks."}
                              for a in ("Theorist", "ModelDesigner", "Calibrator")]}
        r1, _, _ = _run(TRIO_DOC, script, seed=1, tmp_path=tmp_path / "a")
        r2, _, _ = _run(TRIO_DOC, script, seed=2, tmp_path=tmp_path / "b")
        assert r1.run.run_id != r2.run.run_id
        assert r1.run.transcript[0].id != r2.run.transcript[0].id


TWO_STAGE_CP_DOC = """
name: reviewed
version: "1"
agents:
  - name: Drafter
    system_message: You draft material.
  - name: Polisher
    system_message: You polish material.
stages:
  - id: draft
    roster: [Drafter]
    scheduling: round-robin
    task: Draft the survey.
    termination: {max_turns: 1}
    checkpoint:
      id: draft-review
      prompt: Review the draft.
  - id: polish
    roster: [Polisher]
    scheduling: round-robin
    task: Polish the draft.
    entry:
      draft: stage:draft
    termination: {max_turns: 1}
"""

_TWO_STAGE_SCRIPT = {
    "entries": [
        {"agent": "Drafter", "turn": "*", "text": "Here is the draft about inflation."},
        {"agent": "Polisher", "turn": "*", "text": "Polished version ready."},
    ]
}


class TestCheckpoints:
    def test_approve_resumes_and_counts_once(self, tmp_path):
        result, log, store = _run(
            TWO_STAGE_CP_DOC, _TWO_STAGE_SCRIPT, tmp_path=tmp_path
        )
        assert result.run.status == RunStatus.COMPLETED
        records = store.records(result.run.run_id)
        assert [r.checkpoint_id for r in records] == ["draft-review"]
        assert records[0].decision.kind == "approve"
        assert records[0].decided_by == "auto-approve"
        assert result.checkpoints == 1
        opens = [e for e in log.events() if e.kind == "checkpoint-open"]
        decides = [e for e in log.events() if e.kind == "checkpoint-decide"]
        assert len(opens) == 1 and len(decides) == 1
        assert opens[0].seq < decides[0].seq

    def test_checkpoint_payload_carries_stage_artifact(self, tmp_path):
        _, _, store = _run(TWO_STAGE_CP_DOC, _TWO_STAGE_SCRIPT, tmp_path=tmp_path)
        record = store.records()[0]
        assert "draft about inflation" in record.payload["text"]
        assert record.payload["artifacts"]["draft"].startswith("Here is the draft")

    def test_abort_stops_before_later_stages(self, tmp_path):
        result, log, _ = _run(
            TWO_STAGE_CP_DOC,
            _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource([Decision(kind="abort")]),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.ABORTED
        assert "draft-review" in result.run.cause
        senders = {m.sender for m in result.run.transcript}
        assert "Polisher" not in senders
        tasks = [m for m in result.run.transcript if m.kind == "task"]
        assert len(tasks) == 1
        status_events = [e.payload["status"] for e in log.events() if e.kind == "run-status"]
        assert status_events == ["running", "awaiting-human", "aborted"]

    def test_closed_source_aborts_blocking_checkpoint(self, tmp_path):
        result, _, store = _run(
            TWO_STAGE_CP_DOC,
            _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource([]),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.ABORTED
        assert store.records()[0].decided_by == "source:closed"

    def test_revise_without_rerun_feeds_forward(self, tmp_path):
        result, log, _ = _run(
            TWO_STAGE_CP_DOC,
            _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource(
                [Decision(kind="revise", feedback="Focus on post-2008 studies", rerun=False)]
            ),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        tasks = [m for m in result.run.transcript if m.kind == "task"]
        assert len(tasks) == 2  # draft ran once, polish once
        feedback = [m for m in result.run.transcript if m.kind == "human-feedback"]
        assert len(feedback) == 1 and feedback[0].sender == "human"

        polisher_calls = [
            e for e in log.events()
            if e.kind == "backend-call" and e.payload["agent"] == "Polisher"
        ]
        dialogue = polisher_calls[0].payload["dialogue"]
        assert any("Focus on post-2008 studies" in text for _, text in dialogue)

    def test_revise_with_rerun_re_executes_stage(self, tmp_path):
        result, log, store = _run(
            TWO_STAGE_CP_DOC,
            _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource(
                [Decision(kind="revise", feedback="Add financial frictions component",
                          rerun=True)]
            ),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        drafter_outputs = [
            m for m in result.run.transcript
            if m.kind == "agent-output" and m.sender == "Drafter"
        ]
        assert len(drafter_outputs) == 2
        # re-run sees the feedback; checkpoint still opened only once
        assert len(store.records()) == 1
        drafter_calls = [
            e for e in log.events()
            if e.kind == "backend-call" and e.payload["agent"] == "Drafter"
        ]
        assert len(drafter_calls) == 2
        rerun_dialogue = drafter_calls[1].payload["dialogue"]
        assert any("Add financial frictions component" in text for _, text in rerun_dialogue)

    def test_revised_task_replaces_stage_task(self, tmp_path):
        result, log, _ = _run(
            TWO_STAGE_CP_DOC,
            _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource(
                [Decision(kind="revise", feedback="narrow it", rerun=True,
                          revised_task="Draft only the euro-area part.")]
            ),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        tasks = [m.content for m in result.run.transcript if m.kind == "task"]
        assert any(t.startswith("Draft only the euro-area part.") for t in tasks)

    def test_timed_policies_defaults(self, tmp_path):
        doc = TWO_STAGE_CP_DOC.replace(
            "      prompt: Review the draft.",
            "      prompt: Review the draft.\n      policy: {kind: abort-after, seconds: 0}",
        )
        result, _, store = _run(
            doc, _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource([]), tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.ABORTED
        assert store.records()[0].decided_by == "policy:abort-after"

        doc2 = TWO_STAGE_CP_DOC.replace(
            "      prompt: Review the draft.",
            "      prompt: Review the draft.\n      policy: {kind: auto-approve-after, seconds: 0}",
        )
        result2, _, store2 = _run(
            doc2, _TWO_STAGE_SCRIPT,
            decisions=ScriptedDecisionSource([]), tmp_path=tmp_path / "b",
        )
        assert result2.run.status == RunStatus.COMPLETED
        assert store2.records()[0].decided_by == "policy:auto-approve-after"


ESCALATION_DOC = """
name: build
version: "1"
agents:
  - name: Coder
    system_message: You write code.
    tools: [flaky]
    escalation:
      max_retries: 2
      handler: Debugger
  - name: Debugger
    system_message: You debug failures.
  - name: Reviewer
    system_message: You review work.
stages:
  - id: build
    roster: [Coder, Reviewer]
    scheduling: round-robin
    task: Build the estimator.
    termination: {all_spoken: 1}
"""

_ESCALATION_SCRIPT = {
    "entries": [
        {
            "agent": "Coder",
            "turn": "*",
            "text": "",
            "tool_calls": [{"tool": "flaky", "arguments": {}}],
        },
        {"agent": "Debugger", "turn": "*", "text": "The flaky tool is down; work around it."},
        {"agent": "Reviewer", "turn": "*", "text": "Reviewed. Ship it."},
    ]
}


class TestEscalation:
    def test_retries_then_handler_then_human(self, tmp_path):
        result, log, store = _run(
            ESCALATION_DOC,
            _ESCALATION_SCRIPT,
            registry=_registry(fail_tool_times=99),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED

        invokes = [e for e in log.events() if e.kind == "tool-invoke"]
        # 3 attempts in the first turn, 3 more in the post-consult retry
        assert [e.payload["attempt"] for e in invokes] == [1, 2, 3, 1, 2, 3]

        escalations = [e.payload for e in log.events() if e.kind == "escalation"]
        assert escalations[0]["applied"] == "route-to-agent"
        assert escalations[0]["action"] == {"variant": "route-to-agent", "target": "Debugger"}
        assert escalations[0]["event"]["attempt"] == 3
        assert escalations[1]["applied"] == "route-to-human"
        assert escalations[1]["note"] == "handler already consulted"

        senders = [m.sender for m in result.run.transcript if m.kind == "agent-output"]
        assert "Debugger" in senders and "Reviewer" in senders
        assert "Coder" not in senders  # excused, never produced an output

        rescue = [r for r in store.records() if r.checkpoint_id.startswith("escalation-")]
        assert len(rescue) == 1
        assert rescue[0].checkpoint_id == "escalation-build-Coder"
        assert rescue[0].payload["issue"] == "tool-failure"

        controls = [m.content for m in result.run.transcript if m.kind == "control"]
        assert any("consulting Debugger" in c for c in controls)
        assert any("excused from stage build" in c for c in controls)

    def test_tool_recovers_within_retry_budget(self, tmp_path):
        doc = ESCALATION_DOC
        script = {
            "entries": [
                {"agent": "Coder", "turn": 0, "text": "",
                 "tool_calls": [{"tool": "flaky", "arguments": {}}]},
                {"agent": "Coder", "turn": 1, "text": "Built it with the tool result."},
                {"agent": "Reviewer", "turn": "*", "text": "Reviewed. Ship it."},
            ]
        }
        result, log, store = _run(
            doc, script, registry=_registry(fail_tool_times=2), tmp_path=tmp_path
        )
        assert result.run.status == RunStatus.COMPLETED
        assert result.escalations == 0
        assert store.records() == []
        invokes = [e.payload["attempt"] for e in log.events() if e.kind == "tool-invoke"]
        assert invokes == [1, 2, 3]  # third attempt succeeded

    def test_rescue_revise_retries_turn_with_feedback(self, tmp_path):
        doc = """
        name: stuck
        version: "1"
        agents:
          - name: Analyst
            system_message: You analyze.
            tools: [flaky]
            escalation: {max_retries: 0, then_human: true}
        stages:
          - id: probe
            roster: [Analyst]
            scheduling: round-robin
            task: Probe the data.
            termination: {max_turns: 1}
        """
        script = {
            "entries": [
                {"agent": "Analyst", "turn": 0, "text": "",
                 "tool_calls": [{"tool": "flaky", "arguments": {}}]},
                {"agent": "Analyst", "turn": 1, "text": "Proceeding without the tool."},
            ]
        }
        result, log, store = _run(
            doc, script,
            registry=_registry(fail_tool_times=1),
            decisions=ScriptedDecisionSource(
                [Decision(kind="revise", feedback="Skip the flaky tool and summarize.")]
            ),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        feedback = [m for m in result.run.transcript if m.kind == "human-feedback"]
        assert len(feedback) == 1
        outputs = [m.content for m in result.run.transcript if m.kind == "agent-output"]
        assert outputs == ["Proceeding without the tool."]

    def test_fail_stage_without_fallbacks_fails_run(self, tmp_path):
        doc = """
        name: brittle
        version: "1"
        agents:
          - name: Loner
            system_message: You work alone.
            tools: [flaky]
            escalation: {max_retries: 0, then_human: false}
        stages:
          - id: attempt
            roster: [Loner]
            scheduling: round-robin
            task: Try the thing.
            termination: {max_turns: 1}
        """
        script = {
            "entries": [
                {"agent": "Loner", "turn": "*", "text": "",
                 "tool_calls": [{"tool": "flaky", "arguments": {}}]},
            ]
        }
        result, log, _ = _run(
            doc, script, registry=_registry(fail_tool_times=99), tmp_path=tmp_path
        )
        assert result.run.status == RunStatus.FAILED
        assert result.run.failed_stage == "attempt"
        statuses = [e.payload["status"] for e in log.events() if e.kind == "run-status"]
        assert statuses == ["running", "failed"]
        assert result.manifest.status == "failed"

    def test_backend_error_becomes_timeout_escalation(self, tmp_path):
        doc = """
        name: offline
        version: "1"
        agents:
          - name: Caller
            system_message: You call the model.
            escalation: {max_retries: 0, then_human: false}
        stages:
          - id: call
            roster: [Caller]
            scheduling: round-robin
            task: Call out.
            termination: {max_turns: 1}
        """
        # strict script with no entries: every completion raises a miss
        result, log, _ = _run(doc, {"entries": []}, tmp_path=tmp_path)
        assert result.run.status == RunStatus.FAILED
        escalations = [e.payload for e in log.events() if e.kind == "escalation"]
        assert escalations[0]["event"]["issue"] == "timeout"
        calls = [e for e in log.events() if e.kind == "backend-call"]
        replies = [e for e in log.events() if e.kind == "backend-reply"]
        assert len(calls) == len(replies) == 1
        assert "error" in replies[0].payload


FALLBACK_DOC = """
name: fallback-demo
version: "1"
agents:
  - name: Writer
    system_message: You write.
    escalation: {max_retries: 0, then_human: false}
stages:
  - id: draft
    roster: [Writer]
    scheduling: round-robin
    task: First try.
    termination: {sentinel: DONE}
    fallbacks:
      - {task: "Second try.", model: conservative-verifier}
"""


class TestFallbacks:
    def test_fallback_swaps_task_and_model_same_stage(self, tmp_path):
        # strict script misses turn 0 (failure), answers turn 1 (fallback pass)
        script = {"entries": [{"agent": "Writer", "turn": 1, "text": "Worked. DONE"}]}
        result, log, _ = _run(FALLBACK_DOC, script, tmp_path=tmp_path)
        assert result.run.status == RunStatus.COMPLETED
        assert result.run.completed_stages == ["draft"]

        calls = [e.payload for e in log.events() if e.kind == "backend-call"]
        assert len(calls) == 2
        assert calls[0]["model"] == "primary"
        assert calls[1]["model"] == "conservative-verifier"
        assert calls[1]["dialogue"][0][1].startswith("Second try.")

        controls = [m.content for m in result.run.transcript if m.kind == "control"]
        assert any("fallback 1 engaged" in c for c in controls)

    def test_fallbacks_exhausted_fails_run(self, tmp_path):
        script = {"entries": []}  # both the stage and its fallback miss
        result, _, _ = _run(FALLBACK_DOC, script, tmp_path=tmp_path)
        assert result.run.status == RunStatus.FAILED
        assert result.run.failed_stage == "draft"
        assert result.run.cause


CONDITIONAL_DOC = """
name: conditional
version: "1"
params:
  idea:
    type: string
    required: false
agents:
  - name: Collector
    system_message: You collect.
  - name: Enricher
    system_message: You enrich ideas.
stages:
  - id: collect
    roster: [Collector]
    scheduling: round-robin
    task: Collect inputs.
    termination: {max_turns: 1}
  - id: enrich
    roster: [Enricher]
    scheduling: round-robin
    task: "Enrich the idea: {idea}"
    when: idea
    termination: {max_turns: 1}
"""

_CONDITIONAL_SCRIPT = {
    "entries": [
        {"agent": "Collector", "turn": "*", "text": "Inputs collected."},
        {"agent": "Enricher", "turn": "*", "text": "Idea enriched."},
    ]
}


class TestConditionalStages:
    def test_stage_skipped_without_param(self, tmp_path):
        result, _, _ = _run(CONDITIONAL_DOC, _CONDITIONAL_SCRIPT, tmp_path=tmp_path)
        assert result.run.status == RunStatus.COMPLETED
        assert result.stages_skipped == ["enrich"]
        assert "Enricher" not in {m.sender for m in result.run.transcript}
        controls = [m.content for m in result.run.transcript if m.kind == "control"]
        assert any("skipped" in c for c in controls)

    def test_stage_runs_with_param_and_renders_task(self, tmp_path):
        result, _, _ = _run(
            CONDITIONAL_DOC, _CONDITIONAL_SCRIPT,
            params={"idea": "tariff pass-through"}, tmp_path=tmp_path,
        )
        assert result.stages_skipped == []
        tasks = [m.content for m in result.run.transcript if m.kind == "task"]
        assert "Enrich the idea: tariff pass-through" in tasks


FANOUT_DOC = """
name: fanout
version: "1"
agents:
  - name: Alpha
    system_message: You are Alpha.
    escalation: {max_retries: 0, then_human: false}
  - name: Beta
    system_message: You are Beta.
    escalation: {max_retries: 0, then_human: false}
  - name: Gamma
    system_message: You are Gamma.
    escalation: {max_retries: 0, then_human: false}
stages:
  - id: gather
    roster: [Alpha, Beta, Gamma]
    scheduling: parallel-fanout
    task: Gather from your source.
    join: all
"""

_FANOUT_SCRIPT = {
    "entries": [
        {"agent": "Alpha", "turn": "*", "text": "Alpha findings."},
        {"agent": "Beta", "turn": "*", "text": "Beta findings."},
        {"agent": "Gamma", "turn": "*", "text": "Gamma findings."},
    ]
}


class TestParallelFanout:
    def test_commit_order_is_roster_order(self, tmp_path):
        result, _, _ = _run(FANOUT_DOC, _FANOUT_SCRIPT, tmp_path=tmp_path)
        assert result.run.status == RunStatus.COMPLETED
        outputs = [m.sender for m in result.run.transcript if m.kind == "agent-output"]
        assert outputs == ["Alpha", "Beta", "Gamma"]
        artifact = result.run.artifact_message("gather")
        assert artifact.sender == "Gamma"

    def test_branches_do_not_see_each_other(self, tmp_path):
        _, log, _ = _run(FANOUT_DOC, _FANOUT_SCRIPT, tmp_path=tmp_path)
        beta_call = next(
            e for e in log.events()
            if e.kind == "backend-call" and e.payload["agent"] == "Beta"
        )
        texts = [text for _, text in beta_call.payload["dialogue"]]
        assert not any("Alpha findings" in t for t in texts)

    def test_join_first_short_circuits(self, tmp_path):
        doc = FANOUT_DOC.replace("join: all", "join: first")
        result, log, _ = _run(doc, _FANOUT_SCRIPT, tmp_path=tmp_path)
        assert result.run.status == RunStatus.COMPLETED
        outputs = [m.sender for m in result.run.transcript if m.kind == "agent-output"]
        assert outputs == ["Alpha"]
        calls = [e for e in log.events() if e.kind == "backend-call"]
        assert len(calls) == 1

    def test_join_quorum_tolerates_failures(self, tmp_path):
        doc = FANOUT_DOC.replace("join: all", "join: quorum\n    quorum: 2")
        script = {
            "entries": [
                {"agent": "Alpha", "turn": "*", "text": "Alpha findings."},
                # Beta misses: strict script failure -> branch failed
                {"agent": "Gamma", "turn": "*", "text": "Gamma findings."},
            ]
        }
        result, log, _ = _run(doc, script, tmp_path=tmp_path)
        assert result.run.status == RunStatus.COMPLETED
        outputs = [m.sender for m in result.run.transcript if m.kind == "agent-output"]
        assert outputs == ["Alpha", "Gamma"]
        branch_failures = [
            e.payload for e in log.events()
            if e.kind == "escalation" and e.payload["applied"] == "branch-failed"
        ]
        assert len(branch_failures) == 1
        assert branch_failures[0]["event"]["source_agent"] == "Beta"

    def test_join_all_fails_when_a_branch_fails(self, tmp_path):
        script = {
            "entries": [
                {"agent": "Alpha", "turn": "*", "text": "Alpha findings."},
                {"agent": "Gamma", "turn": "*", "text": "Gamma findings."},
            ]
        }
        result, _, _ = _run(FANOUT_DOC, script, tmp_path=tmp_path)
        assert result.run.status == RunStatus.FAILED
        assert "Beta" in result.run.cause


LOOKAHEAD_DOC = """
name: lookahead
version: "1"
agents:
  - name: Searcher
    system_message: You search.
  - name: Screener
    system_message: You screen results.
  - name: Archivist
    system_message: You archive independently.
  - name: Summarizer
    system_message: You summarize screened results.
stages:
  - id: search
    roster: [Searcher]
    scheduling: round-robin
    task: Search sources.
    termination: {max_turns: 1}
  - id: screen
    roster: [Screener]
    scheduling: round-robin
    task: Screen the results.
    entry:
      found: stage:search
    termination: {max_turns: 1}
    checkpoint:
      id: screen-review
      prompt: Approve the screened set.
  - id: archive
    roster: [Archivist]
    scheduling: round-robin
    task: Archive the raw results.
    entry:
      found: stage:search
    termination: {max_turns: 1}
  - id: summarize
    roster: [Summarizer]
    scheduling: round-robin
    task: Summarize what survived screening.
    entry:
      screened: stage:screen
    termination: {max_turns: 1}
"""

_LOOKAHEAD_SCRIPT = {
    "entries": [
        {"agent": "Searcher", "turn": "*", "text": "Found 12 papers."},
        {"agent": "Screener", "turn": "*", "text": "Kept 5 papers."},
        {"agent": "Archivist", "turn": "*", "text": "Archived the raw set."},
        {"agent": "Summarizer", "turn": "*", "text": "Summary of 5 papers."},
    ]
}


class TestLookahead:
    def test_independent_stage_runs_during_checkpoint_wait(self, tmp_path):
        result, log, _ = _run(
            LOOKAHEAD_DOC,
            _LOOKAHEAD_SCRIPT,
            decisions=ScriptedDecisionSource([Decision(kind="approve")]),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.COMPLETED
        # archive finished while screen-review was pending
        assert result.run.completed_stages == ["search", "archive", "screen", "summarize"]

        events = log.events()
        open_seq = next(e.seq for e in events if e.kind == "checkpoint-open")
        decide_seq = next(e.seq for e in events if e.kind == "checkpoint-decide")
        archivist_output_seq = next(
            e.seq for e in events
            if e.kind == "message" and e.payload.get("sender") == "Archivist"
        )
        assert open_seq < archivist_output_seq < decide_seq

    def test_dependent_stage_waits_for_decision(self, tmp_path):
        _, log, _ = _run(
            LOOKAHEAD_DOC,
            _LOOKAHEAD_SCRIPT,
            decisions=ScriptedDecisionSource([Decision(kind="approve")]),
            tmp_path=tmp_path,
        )
        events = log.events()
        decide_seq = next(e.seq for e in events if e.kind == "checkpoint-decide")
        summarizer_seq = next(
            e.seq for e in events
            if e.kind == "message" and e.payload.get("sender") == "Summarizer"
        )
        assert summarizer_seq > decide_seq

    def test_abort_leaves_lookahead_work_in_place(self, tmp_path):
        result, _, _ = _run(
            LOOKAHEAD_DOC,
            _LOOKAHEAD_SCRIPT,
            decisions=ScriptedDecisionSource([Decision(kind="abort")]),
            tmp_path=tmp_path,
        )
        assert result.run.status == RunStatus.ABORTED
        assert "archive" in result.run.completed_stages
        assert "summarize" not in result.run.completed_stages


class TestSequentialScheduling:
    def test_single_pass_in_roster_order(self, tmp_path):
        doc = """
        name: seq
        version: "1"
        agents:
          - name: First
            system_message: You go first.
          - name: Second
            system_message: You go second.
        stages:
          - id: relay
            roster: [First, Second]
            scheduling: sequential
            task: Pass the baton.
        """
        script = {
            "entries": [
                {"agent": "First", "turn": "*", "text": "First done."},
                {"agent": "Second", "turn": "*", "text": "Second done."},
            ]
        }
        result, _, _ = _run(doc, script, tmp_path=tmp_path)
        assert result.run.status == RunStatus.COMPLETED
        outputs = [m.sender for m in result.run.transcript if m.kind == "agent-output"]
        assert outputs == ["First", "Second"]

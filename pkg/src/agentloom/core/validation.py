"""Spec validation: invariants reported as data, not exceptions.

The loader already refuses structurally broken documents; this module checks
everything else (duplicates, emptiness, tool resolution, binding sanity) on
the object level so programmatically-built specs get the same scrutiny.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List

from .types import PipelineSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    detail: str

    def to_dict(self) -> Dict[str, str]:
        return {"code": self.code, "path": self.path, "detail": self.detail}


@dataclass
class ValidationReport:
    pipeline: str
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, path: str, detail: str) -> None:
        self.violations.append(Violation(code, path, detail))

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pipeline": self.pipeline,
            "ok": self.ok,
            "violations": [v.to_dict() for v in self.violations],
        }


def validate_pipeline_spec(spec: PipelineSpec, known_tools: Iterable[str]) -> ValidationReport:
    """Check every spec invariant and return the full list of violations."""
    tools = set(known_tools)
    report = ValidationReport(pipeline=spec.name)
    agent_names = [a.name for a in spec.agents]
    declared_agents = set(agent_names)
    param_names = {p.name for p in spec.params}

    if not spec.stages:
        report.add("no-stages", "$", "pipeline declares no stages")
    if not spec.agents:
        report.add("no-agents", "$", "pipeline declares no agents")

    seen_agents = set()
    for i, agent in enumerate(spec.agents):
        path = f"agents[{i}]({agent.name})"
        if agent.name in seen_agents:
            report.add("duplicate-agent", path, f"agent name {agent.name!r} declared more than once")
        seen_agents.add(agent.name)
        if not agent.system_message.strip():
            report.add("empty-system-message", path, f"agent {agent.name!r} has an empty system message")
        for tool in agent.tools:
            if tool not in tools:
                report.add("unknown-tool", path, f"tool {tool!r} is not in the registry")
        handler = agent.escalation_policy.handler_agent
        if handler is not None and handler not in declared_agents:
            report.add("unknown-handler", path, f"escalation handler {handler!r} is not a declared agent")

    seen_stages: List[str] = []
    seen_checkpoints = set()
    enabled = {a.name for a in spec.agents if a.enabled}
    for i, stage in enumerate(spec.stages):
        path = f"stages[{i}]({stage.id})"
        if stage.id in seen_stages:
            report.add("duplicate-stage", path, f"stage id {stage.id!r} declared more than once")
        if not stage.roster:
            report.add("empty-roster", path, "stage roster is empty")
        for member in stage.roster:
            if member not in declared_agents:
                report.add("unknown-agent", path, f"roster references undeclared agent {member!r}")
        if stage.roster and not any(m in enabled for m in stage.roster):
            report.add("disabled-roster", path, "every agent in the roster is disabled")
        if not stage.task.strip():
            report.add("empty-task", path, "stage has no task text")
        for name, binding in stage.entry:
            if binding.kind == "stage" and binding.ref not in seen_stages:
                report.add(
                    "forward-entry-binding",
                    f"{path}.entry.{name}",
                    f"binding references stage {binding.ref!r} which is not an earlier stage",
                )
            if binding.kind == "param" and binding.ref not in param_names:
                report.add(
                    "unknown-param",
                    f"{path}.entry.{name}",
                    f"binding references undeclared parameter {binding.ref!r}",
                )
        if stage.when is not None and stage.when not in param_names:
            report.add("unknown-param", path, f"when-condition references undeclared parameter {stage.when!r}")
        if stage.termination.variant == "sentinel" and not re.fullmatch(r"\S+", stage.termination.token or ""):
            report.add("bad-sentinel", path, "sentinel token must be a single non-blank word")
        if stage.scheduling == "parallel-fanout" and stage.join == "quorum":
            if stage.quorum is None or stage.quorum < 1 or stage.quorum > len(stage.roster):
                report.add(
                    "bad-quorum",
                    path,
                    f"quorum join requires 1 <= quorum <= roster size, got {stage.quorum!r}",
                )
        if stage.checkpoint is not None:
            cp = stage.checkpoint
            if cp.id in seen_checkpoints:
                report.add("duplicate-checkpoint", f"{path}.checkpoint", f"checkpoint id {cp.id!r} reused")
            seen_checkpoints.add(cp.id)
            if not cp.prompt.strip():
                report.add("empty-prompt", f"{path}.checkpoint", "checkpoint prompt is empty")
            for ref in cp.payload_binding:
                if ref != stage.id and ref not in seen_stages:
                    report.add(
                        "unknown-payload-stage",
                        f"{path}.checkpoint",
                        f"payload references stage {ref!r} which is not this or an earlier stage",
                    )
        for j, fb in enumerate(stage.fallbacks):
            if fb.scheduling is not None and fb.scheduling not in ("round-robin", "sequential", "parallel-fanout"):
                report.add("bad-fallback", f"{path}.fallbacks[{j}]", f"unknown scheduling {fb.scheduling!r}")
            if fb.tool_overrides:
                for agent_name, names in fb.tool_overrides.items():
                    if agent_name not in declared_agents:
                        report.add(
                            "unknown-agent",
                            f"{path}.fallbacks[{j}]",
                            f"tool override targets undeclared agent {agent_name!r}",
                        )
                    for tool in names:
                        if tool not in tools:
                            report.add(
                                "unknown-tool",
                                f"{path}.fallbacks[{j}]",
                                f"tool {tool!r} is not in the registry",
                            )
        seen_stages.append(stage.id)

    if spec.checkpoint_count is not None:
        actual = len(spec.declared_checkpoints())
        if actual != spec.checkpoint_count:
            report.add(
                "checkpoint-count-mismatch",
                "$",
                f"document declares checkpoint_count={spec.checkpoint_count} but defines {actual}",
            )

    if not report.ok:
        logger.debug("validation of %s found %d violation(s): %s",
                     spec.name, len(report.violations), report.codes())
    return report

"""Pipeline document format: strict loading and round-trippable serialization.

Documents are YAML with a fixed grammar (see docs/formats.md and
schemas/pipeline.schema.json).  Loading is strict: unknown keys, type
mismatches, and dangling references are errors annotated with the offending
path; everything else about a spec's health is reported by
:mod:`agentloom.core.validation` as data rather than raised.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Tuple

import yaml

from ..canonical import digest
from .types import (
    AgentSpec,
    Binding,
    CheckpointPolicy,
    CheckpointSpec,
    EscalationPolicy,
    FallbackSpec,
    ParamSpec,
    PipelineSpec,
    SpecError,
    StageSpec,
    TerminationCondition,
)

logger = logging.getLogger(__name__)

_TOP_KEYS = {
    "name",
    "version",
    "banner",
    "concrete",
    "checkpoint_count",
    "params",
    "agents",
    "stages",
}
_AGENT_KEYS = {"name", "description", "system_message", "tools", "model", "escalation", "enabled"}
_ESCALATION_KEYS = {"max_retries", "handler", "then_human"}
_STAGE_KEYS = {
    "id",
    "roster",
    "scheduling",
    "task",
    "entry",
    "termination",
    "checkpoint",
    "fallbacks",
    "when",
    "join",
    "quorum",
}
_TERMINATION_KEYS = {"sentinel", "max_turns", "all_spoken"}
_CHECKPOINT_KEYS = {"id", "prompt", "payload", "policy", "revise_rerun_default"}
_POLICY_KEYS = {"kind", "seconds"}
_FALLBACK_KEYS = {"scheduling", "model", "termination", "task", "tools"}
_PARAM_KEYS = {"type", "required", "default", "description"}


def _check_keys(doc: Dict[str, Any], allowed: set, path: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SpecError(f"unknown key(s): {', '.join(unknown)}", path)


def _expect(doc: Dict[str, Any], key: str, kind: type, path: str, *, required: bool = True, default: Any = None) -> Any:
    if key not in doc:
        if required:
            raise SpecError(f"missing required key: {key}", path)
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is bool and not isinstance(value, bool):
        raise SpecError(f"key {key!r} must be a boolean, got {type(value).__name__}", path)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SpecError(f"key {key!r} must be {kind.__name__}, got {type(value).__name__}", path)
    return value


def _expect_str_list(doc: Dict[str, Any], key: str, path: str, *, required: bool = True) -> List[str]:
    value = _expect(doc, key, list, path, required=required, default=[])
    for i, item in enumerate(value):
        if not isinstance(item, str):
            raise SpecError(f"key {key!r} must be a list of strings (item {i} is {type(item).__name__})", path)
    return list(value)


def _parse_escalation(doc: Any, path: str) -> EscalationPolicy:
    if not isinstance(doc, dict):
        raise SpecError(f"escalation must be a mapping, got {type(doc).__name__}", path)
    _check_keys(doc, _ESCALATION_KEYS, path)
    retries = _expect(doc, "max_retries", int, path, required=False, default=1)
    handler = doc.get("handler")
    if handler is not None and not isinstance(handler, str):
        raise SpecError("key 'handler' must be a string or null", path)
    then_human = _expect(doc, "then_human", bool, path, required=False, default=True)
    if retries < 0:
        raise SpecError("max_retries must be >= 0", path)
    return EscalationPolicy(max_retries=retries, handler_agent=handler, then_human=then_human)


def _parse_agent(doc: Any, path: str) -> AgentSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"agent entry must be a mapping, got {type(doc).__name__}", path)
    _check_keys(doc, _AGENT_KEYS, path)
    name = _expect(doc, "name", str, path)
    escalation = EscalationPolicy()
    if "escalation" in doc:
        escalation = _parse_escalation(doc["escalation"], f"{path}.escalation")
    return AgentSpec(
        name=name,
        description=_expect(doc, "description", str, path, required=False, default=""),
        system_message=_expect(doc, "system_message", str, path, required=False, default=""),
        tools=tuple(_expect_str_list(doc, "tools", path, required=False)),
        model=_expect(doc, "model", str, path, required=False, default="primary"),
        escalation_policy=escalation,
        enabled=_expect(doc, "enabled", bool, path, required=False, default=True),
    )


def _parse_termination(doc: Any, path: str) -> TerminationCondition:
    if not isinstance(doc, dict):
        raise SpecError(f"termination must be a mapping, got {type(doc).__name__}", path)
    _check_keys(doc, _TERMINATION_KEYS, path)
    if len(doc) != 1:
        raise SpecError("termination must declare exactly one of sentinel/max_turns/all_spoken", path)
    try:
        if "sentinel" in doc:
            token = doc["sentinel"]
            if not isinstance(token, str):
                raise SpecError("sentinel token must be a string", path)
            return TerminationCondition.sentinel(token)
        if "max_turns" in doc:
            turns = doc["max_turns"]
            if not isinstance(turns, int) or isinstance(turns, bool):
                raise SpecError("max_turns must be an integer", path)
            return TerminationCondition.max_turns(turns)
        rounds = doc["all_spoken"]
        if not isinstance(rounds, int) or isinstance(rounds, bool):
            raise SpecError("all_spoken must be an integer", path)
        return TerminationCondition.all_spoken(rounds)
    except ValueError as exc:
        raise SpecError(str(exc), path) from exc


def _parse_policy(doc: Any, path: str) -> CheckpointPolicy:
    if isinstance(doc, str):
        try:
            return CheckpointPolicy(kind=doc)
        except ValueError as exc:
            raise SpecError(str(exc), path) from exc
    if not isinstance(doc, dict):
        raise SpecError("policy must be a string or a mapping", path)
    _check_keys(doc, _POLICY_KEYS, path)
    kind = _expect(doc, "kind", str, path)
    seconds = doc.get("seconds")
    if seconds is not None and not isinstance(seconds, (int, float)):
        raise SpecError("policy seconds must be a number", path)
    try:
        return CheckpointPolicy(kind=kind, seconds=float(seconds) if seconds is not None else None)
    except ValueError as exc:
        raise SpecError(str(exc), path) from exc


def _parse_checkpoint(doc: Any, path: str) -> CheckpointSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"checkpoint must be a mapping, got {type(doc).__name__}", path)
    _check_keys(doc, _CHECKPOINT_KEYS, path)
    policy = CheckpointPolicy()
    if "policy" in doc:
        policy = _parse_policy(doc["policy"], f"{path}.policy")
    return CheckpointSpec(
        id=_expect(doc, "id", str, path),
        prompt=_expect(doc, "prompt", str, path),
        payload_binding=tuple(_expect_str_list(doc, "payload", path, required=False)),
        policy=policy,
        revise_rerun_default=_expect(doc, "revise_rerun_default", bool, path, required=False, default=True),
    )


def _parse_fallback(doc: Any, path: str) -> FallbackSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"fallback entry must be a mapping, got {type(doc).__name__}", path)
    _check_keys(doc, _FALLBACK_KEYS, path)
    termination = None
    if "termination" in doc:
        termination = _parse_termination(doc["termination"], f"{path}.termination")
    tool_overrides = None
    if "tools" in doc:
        raw = doc["tools"]
        if not isinstance(raw, dict):
            raise SpecError("fallback tools must map agent name -> list of tool names", path)
        tool_overrides = {}
        for agent, names in raw.items():
            if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
                raise SpecError(f"fallback tools for {agent!r} must be a list of strings", path)
            tool_overrides[str(agent)] = tuple(names)
    return FallbackSpec(
        scheduling=_expect(doc, "scheduling", str, path, required=False),
        model=_expect(doc, "model", str, path, required=False),
        termination=termination,
        task=_expect(doc, "task", str, path, required=False),
        tool_overrides=tool_overrides,
    )


def _parse_entry(doc: Any, path: str) -> Tuple[Tuple[str, Binding], ...]:
    if not isinstance(doc, dict):
        raise SpecError(f"entry must be a mapping of binding name -> source, got {type(doc).__name__}", path)
    entries = []
    for name, ref in doc.items():
        if not isinstance(ref, str):
            raise SpecError(f"entry binding {name!r} must be a string like 'stage:<id>' or 'param:<name>'", path)
        try:
            entries.append((str(name), Binding.parse(ref)))
        except ValueError as exc:
            raise SpecError(str(exc), f"{path}.{name}") from exc
    return tuple(entries)


def _parse_stage(doc: Any, path: str) -> StageSpec:
    if not isinstance(doc, dict):
        raise SpecError(f"stage entry must be a mapping, got {type(doc).__name__}", path)
    _check_keys(doc, _STAGE_KEYS, path)
    stage_id = _expect(doc, "id", str, path)
    roster = tuple(_expect_str_list(doc, "roster", path))
    scheduling = _expect(doc, "scheduling", str, path, required=False, default="round-robin")
    if scheduling not in ("round-robin", "sequential", "parallel-fanout"):
        raise SpecError(f"unknown scheduling mode: {scheduling!r}", path)
    if "termination" in doc:
        termination = _parse_termination(doc["termination"], f"{path}.termination")
    elif scheduling == "round-robin":
        raise SpecError("round-robin stages must declare a termination condition", path)
    else:
        termination = TerminationCondition.all_spoken(1)
    checkpoint = None
    if "checkpoint" in doc:
        checkpoint = _parse_checkpoint(doc["checkpoint"], f"{path}.checkpoint")
    fallbacks = tuple(
        _parse_fallback(fb, f"{path}.fallbacks[{i}]")
        for i, fb in enumerate(_expect(doc, "fallbacks", list, path, required=False, default=[]))
    )
    join = _expect(doc, "join", str, path, required=False, default="all")
    if join not in ("all", "first", "quorum"):
        raise SpecError(f"unknown join rule: {join!r}", path)
    quorum = doc.get("quorum")
    if quorum is not None and (not isinstance(quorum, int) or isinstance(quorum, bool)):
        raise SpecError("quorum must be an integer", path)
    return StageSpec(
        id=stage_id,
        roster=roster,
        scheduling=scheduling,
        task=_expect(doc, "task", str, path, required=False, default=""),
        entry=_parse_entry(doc.get("entry", {}), f"{path}.entry"),
        termination=termination,
        checkpoint=checkpoint,
        fallbacks=fallbacks,
        when=_expect(doc, "when", str, path, required=False),
        join=join,
        quorum=quorum,
    )


def _parse_params(doc: Any, path: str) -> Tuple[ParamSpec, ...]:
    if not isinstance(doc, dict):
        raise SpecError(f"params must be a mapping, got {type(doc).__name__}", path)
    out = []
    for name, pdoc in doc.items():
        ppath = f"{path}.{name}"
        if pdoc is None:
            pdoc = {}
        if not isinstance(pdoc, dict):
            raise SpecError("parameter declaration must be a mapping", ppath)
        _check_keys(pdoc, _PARAM_KEYS, ppath)
        ptype = _expect(pdoc, "type", str, ppath, required=False, default="string")
        try:
            out.append(
                ParamSpec(
                    name=str(name),
                    type=ptype,
                    required=_expect(pdoc, "required", bool, ppath, required=False, default=False),
                    default=pdoc.get("default"),
                    description=_expect(pdoc, "description", str, ppath, required=False, default=""),
                )
            )
        except ValueError as exc:
            raise SpecError(str(exc), ppath) from exc
    return tuple(out)


def _check_references(spec: PipelineSpec) -> None:
    """Raise on dangling references; run at load time so errors fail fast."""
    agent_names = set(spec.agent_names())
    param_names = {p.name for p in spec.params}
    for agent in spec.agents:
        handler = agent.escalation_policy.handler_agent
        if handler is not None and handler not in agent_names:
            raise SpecError(
                f"escalation handler {handler!r} is not a declared agent",
                f"agents.{agent.name}.escalation",
            )
    seen_stages: List[str] = []
    for i, stage in enumerate(spec.stages):
        path = f"stages[{i}]({stage.id})"
        for member in stage.roster:
            if member not in agent_names:
                raise SpecError(f"roster references undeclared agent {member!r}", path)
        for name, binding in stage.entry:
            if binding.kind == "stage":
                if binding.ref not in seen_stages:
                    raise SpecError(
                        f"entry binding {name!r} references stage {binding.ref!r} "
                        "which is not an earlier stage",
                        f"{path}.entry",
                    )
            else:
                if binding.ref not in param_names:
                    raise SpecError(
                        f"entry binding {name!r} references undeclared parameter {binding.ref!r}",
                        f"{path}.entry",
                    )
        if stage.when is not None and stage.when not in param_names:
            raise SpecError(f"when-condition references undeclared parameter {stage.when!r}", path)
        if stage.checkpoint is not None:
            for ref in stage.checkpoint.payload_binding:
                if ref not in seen_stages and ref != stage.id:
                    raise SpecError(
                        f"checkpoint payload references stage {ref!r} which is not this or an earlier stage",
                        f"{path}.checkpoint",
                    )
        seen_stages.append(stage.id)


def load_pipeline_spec(text: str) -> PipelineSpec:
    """Parse a pipeline document into a :class:`PipelineSpec`.

    Raises :class:`SpecError` with a path annotation for structural problems
    (unknown keys, type mismatches, dangling references); YAML syntax errors
    keep pyyaml's line/column mark in the message.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError(f"document is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"document root must be a mapping, got {type(doc).__name__}")
    _check_keys(doc, _TOP_KEYS, "$")
    name = _expect(doc, "name", str, "$")
    version = _expect(doc, "version", str, "$")
    params = _parse_params(doc.get("params", {}), "params")
    agents_doc = _expect(doc, "agents", list, "$")
    agents = tuple(_parse_agent(a, f"agents[{i}]") for i, a in enumerate(agents_doc))
    stages_doc = _expect(doc, "stages", list, "$")
    stages = tuple(_parse_stage(s, f"stages[{i}]") for i, s in enumerate(stages_doc))
    checkpoint_count = doc.get("checkpoint_count")
    if checkpoint_count is not None and (
        not isinstance(checkpoint_count, int) or isinstance(checkpoint_count, bool)
    ):
        raise SpecError("checkpoint_count must be an integer", "$")
    spec = PipelineSpec(
        name=name,
        version=version,
        agents=agents,
        stages=stages,
        params=params,
        banner=_expect(doc, "banner", str, "$", required=False),
        concrete=_expect(doc, "concrete", bool, "$", required=False, default=True),
        checkpoint_count=checkpoint_count,
    )
    _check_references(spec)
    logger.debug("loaded pipeline spec %s v%s (%d agents, %d stages)",
                 spec.name, spec.version, len(agents), len(stages))
    return spec


def spec_to_doc(spec: PipelineSpec) -> dict:
    doc: Dict[str, Any] = {"name": spec.name, "version": spec.version}
    if spec.banner is not None:
        doc["banner"] = spec.banner
    if not spec.concrete:
        doc["concrete"] = False
    if spec.checkpoint_count is not None:
        doc["checkpoint_count"] = spec.checkpoint_count
    if spec.params:
        doc["params"] = {p.name: p.to_dict() for p in spec.params}
    doc["agents"] = [a.to_dict() for a in spec.agents]
    doc["stages"] = [s.to_dict() for s in spec.stages]
    return doc


def serialize_pipeline_spec(spec: PipelineSpec) -> str:
    """Render a spec back to document text (load . serialize . load is identity)."""
    return yaml.safe_dump(spec_to_doc(spec), sort_keys=False, allow_unicode=True, width=100)


def spec_digest(spec: PipelineSpec) -> str:
    """Content digest of a spec, independent of formatting concerns."""
    return digest(spec_to_doc(spec))

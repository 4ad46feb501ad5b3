"""Validation invariants, including the broken-spec corpus.

Each corpus entry is a deliberately broken spec paired with the violation
code it must produce; specs are built programmatically so the loader's own
reference checks don't get in the way.
"""

import pytest

from agentloom.core import (
    AgentSpec,
    CheckpointPolicy,
    CheckpointSpec,
    Binding,
    EscalationPolicy,
    ParamSpec,
    PipelineSpec,
    StageSpec,
    TerminationCondition,
    validate_pipeline_spec,
)

KNOWN_TOOLS = {"web_fetch", "arxiv_search", "format_citations"}


def agent(name, **kw):
    kw.setdefault("system_message", f"You are {name}.")
    return AgentSpec(name=name, **kw)


def stage(sid, roster, **kw):
    kw.setdefault("task", "do the thing")
    kw.setdefault("termination", TerminationCondition.max_turns(1))
    return StageSpec(id=sid, roster=tuple(roster), **kw)


def pipeline(agents, stages, **kw):
    kw.setdefault("version", "1")
    return PipelineSpec(name=kw.pop("name", "broken"), agents=tuple(agents), stages=tuple(stages), **kw)


def test_healthy_spec_has_no_violations(trio_spec):
    report = validate_pipeline_spec(trio_spec, KNOWN_TOOLS)
    assert report.ok
    assert report.violations == []


# ---------------------------------------------------------------- corpus ---

CORPUS = [
    (
        "duplicate-agent",
        pipeline([agent("A"), agent("A")], [stage("s", ["A"])]),
    ),
    (
        "duplicate-stage",
        pipeline([agent("A")], [stage("s", ["A"]), stage("s", ["A"])]),
    ),
    (
        "unknown-tool",
        pipeline([agent("A", tools=("scholar_search_tool",))], [stage("s", ["A"])]),
    ),
    (
        "unknown-agent",
        pipeline([agent("A")], [stage("s", ["Ghost"])]),
    ),
    (
        "empty-roster",
        pipeline([agent("A")], [stage("s", [])]),
    ),
    (
        "empty-system-message",
        pipeline([AgentSpec(name="A", system_message="  ")], [stage("s", ["A"])]),
    ),
    (
        "no-stages",
        pipeline([agent("A")], []),
    ),
    (
        "empty-task",
        pipeline([agent("A")], [stage("s", ["A"], task=" ")]),
    ),
    (
        "forward-entry-binding",
        pipeline(
            [agent("A")],
            [
                stage("s1", ["A"], entry=(("later", Binding("stage", "s2")),)),
                stage("s2", ["A"]),
            ],
        ),
    ),
    (
        "unknown-param",
        pipeline([agent("A")], [stage("s", ["A"], entry=(("x", Binding("param", "nope")),))]),
    ),
    (
        "unknown-handler",
        pipeline(
            [agent("A", escalation_policy=EscalationPolicy(handler_agent="Ghost"))],
            [stage("s", ["A"])],
        ),
    ),
    (
        "disabled-roster",
        pipeline([agent("A", enabled=False)], [stage("s", ["A"])]),
    ),
    (
        "bad-quorum",
        pipeline(
            [agent("A"), agent("B")],
            [stage("s", ["A", "B"], scheduling="parallel-fanout", join="quorum", quorum=5)],
        ),
    ),
    (
        "bad-sentinel",
        pipeline(
            [agent("A")],
            [stage("s", ["A"], termination=TerminationCondition(variant="sentinel", token="TWO WORDS"))],
        ),
    ),
    (
        "duplicate-checkpoint",
        pipeline(
            [agent("A")],
            [
                stage("s1", ["A"], checkpoint=CheckpointSpec(id="cp", prompt="review")),
                stage("s2", ["A"], checkpoint=CheckpointSpec(id="cp", prompt="review")),
            ],
        ),
    ),
    (
        "unknown-payload-stage",
        pipeline(
            [agent("A")],
            [stage("s", ["A"], checkpoint=CheckpointSpec(id="cp", prompt="p", payload_binding=("zzz",)))],
        ),
    ),
    (
        "checkpoint-count-mismatch",
        pipeline([agent("A")], [stage("s", ["A"])], checkpoint_count=3),
    ),
]


@pytest.mark.parametrize("expected_code,broken", CORPUS, ids=[c for c, _ in CORPUS])
def test_broken_spec_corpus(expected_code, broken):
    report = validate_pipeline_spec(broken, KNOWN_TOOLS)
    assert not report.ok
    assert expected_code in report.codes(), (
        f"expected {expected_code} among {report.codes()}"
    )


def test_corpus_is_large_enough():
    assert len(CORPUS) >= 10


def test_violations_carry_paths():
    broken = pipeline([agent("A", tools=("nope",))], [stage("s", ["A"])])
    report = validate_pipeline_spec(broken, KNOWN_TOOLS)
    v = report.violations[0]
    assert v.code == "unknown-tool"
    assert "agents[0]" in v.path
    assert "nope" in v.detail

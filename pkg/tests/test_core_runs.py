"""new_run: parameter binding, determinism, and run-state transitions."""

import textwrap

import pytest

from agentloom.core import (
    Message,
    ParameterError,
    RunStatus,
    StateTransitionError,
    load_pipeline_spec,
    new_run,
)

PARAM_DOC = textwrap.dedent(
    """
    name: parametrized
    version: "1"
    params:
      topic: {type: string, required: true}
      depth: {type: int, default: 2}
      verbose: {type: bool}
    agents:
      - name: A
        system_message: hi
    stages:
      - id: s
        roster: [A]
        task: "Study {topic}"
        termination: {max_turns: 1}
    """
)


@pytest.fixture
def param_spec():
    return load_pipeline_spec(PARAM_DOC)


def test_new_run_is_pending_with_cursor_on_first_stage(param_spec):
    run = new_run(param_spec, {"topic": "inflation"}, seed=7)
    assert run.status == RunStatus.PENDING
    assert run.stage_cursor == "s"
    assert run.transcript == []
    assert run.params["topic"] == "inflation"
    assert run.params["depth"] == 2


def test_missing_required_parameter(param_spec):
    with pytest.raises(ParameterError) as err:
        new_run(param_spec, {}, seed=7)
    assert "topic" in str(err.value)


def test_empty_required_string_rejected(param_spec):
    with pytest.raises(ParameterError):
        new_run(param_spec, {"topic": "   "}, seed=7)


def test_unknown_parameter_rejected(param_spec):
    with pytest.raises(ParameterError) as err:
        new_run(param_spec, {"topic": "x", "bogus": 1}, seed=7)
    assert "bogus" in str(err.value)


def test_type_mismatch_rejected(param_spec):
    with pytest.raises(ParameterError):
        new_run(param_spec, {"topic": "x", "depth": "three"}, seed=7)


def test_seeded_runs_share_ids(param_spec):
    a = new_run(param_spec, {"topic": "x"}, seed=42)
    b = new_run(param_spec, {"topic": "x"}, seed=42)
    assert a.run_id == b.run_id
    assert a.spec_hash == b.spec_hash
    c = new_run(param_spec, {"topic": "x"}, seed=43)
    assert c.run_id != a.run_id


def test_status_transitions(param_spec):
    run = new_run(param_spec, {"topic": "x"}, seed=1)
    run.transition(RunStatus.RUNNING)
    run.transition(RunStatus.AWAITING_HUMAN)
    run.transition(RunStatus.RUNNING)
    run.transition(RunStatus.COMPLETED)
    with pytest.raises(StateTransitionError):
        run.transition(RunStatus.RUNNING)


def test_pending_cannot_jump_to_completed(param_spec):
    run = new_run(param_spec, {"topic": "x"}, seed=1)
    with pytest.raises(StateTransitionError):
        run.transition(RunStatus.COMPLETED)


def test_message_kind_and_sender_rules():
    with pytest.raises(ValueError):
        Message(id="m", run_id="r", sender="A", kind="gossip", content="x")
    with pytest.raises(ValueError):
        Message(id="m", run_id="r", sender="A", kind="human-feedback", content="x")
    ok = Message(id="m", run_id="r", sender="human", kind="human-feedback", content="x")
    assert ok.sender == "human"


def test_non_first_message_needs_parent(param_spec):
    run = new_run(param_spec, {"topic": "x"}, seed=1)
    first = Message(id="m1", run_id=run.run_id, sender="system", kind="task", content="t")
    run.append(first)
    orphan = Message(id="m2", run_id=run.run_id, sender="A", kind="agent-output", content="x")
    with pytest.raises(ValueError):
        run.append(orphan)
    child = Message(
        id="m2", run_id=run.run_id, sender="A", kind="agent-output", content="x", parents=("m1",)
    )
    run.append(child)
    assert run.last_message_id() == "m2"

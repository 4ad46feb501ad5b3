"""Checkpoint store: open/decide lifecycle, immutability, decision sources."""

import threading

import pytest

from agentloom.checkpoints.sources import (
    AutoApproveSource,
    ConsoleSource,
    QueueSource,
    ScriptedDecisionSource,
)
from agentloom.checkpoints.store import (
    CheckpointError,
    CheckpointRecord,
    CheckpointStore,
    Decision,
)


def _open(store, n=1, run_id="run-1", checkpoint_id=None):
    return store.open(
        record_id=f"cp-{n:06d}-deadbeef",
        checkpoint_id=checkpoint_id or f"review-{n}",
        run_id=run_id,
        stage_id="stage-a",
        prompt="Please review.",
        payload={"text": "the artifact"},
    )


class TestDecisionShape:
    def test_approve_carries_nothing_else(self):
        with pytest.raises(ValueError):
            Decision(kind="approve", feedback="nope")
        with pytest.raises(ValueError):
            Decision(kind="abort", rerun=True)
        with pytest.raises(ValueError):
            Decision(kind="approve", rerun=False)

    def test_revise_requires_feedback(self):
        with pytest.raises(ValueError):
            Decision(kind="revise", feedback="   ")
        d = Decision(kind="revise", feedback="Focus on post-2008 studies", rerun=False)
        assert d.to_dict() == {
            "kind": "revise",
            "feedback": "Focus on post-2008 studies",
            "rerun": False,
        }

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            Decision(kind="maybe")

    def test_round_trip_with_revised_task(self):
        d = Decision(kind="revise", feedback="tighten", rerun=True, revised_task="New task")
        assert Decision.from_dict(d.to_dict()) == d

    def test_unspecified_rerun_survives_round_trip(self):
        d = Decision(kind="revise", feedback="tighten")
        assert d.rerun is None
        assert "rerun" not in d.to_dict()
        assert Decision.from_dict(d.to_dict()).rerun is None


class TestStoreLifecycle:
    def test_open_then_pending(self):
        store = CheckpointStore()
        rec = _open(store)
        assert not rec.decided
        assert [r.record_id for r in store.pending()] == [rec.record_id]

    def test_duplicate_checkpoint_for_run_rejected(self):
        store = CheckpointStore()
        _open(store, 1, checkpoint_id="review")
        with pytest.raises(CheckpointError):
            _open(store, 2, checkpoint_id="review")

    def test_same_checkpoint_different_runs_ok(self):
        store = CheckpointStore()
        _open(store, 1, run_id="run-1", checkpoint_id="review")
        _open(store, 2, run_id="run-2", checkpoint_id="review")
        assert len(store.pending()) == 2

    def test_pending_is_newest_first_and_filterable(self):
        store = CheckpointStore()
        _open(store, 1, run_id="run-1")
        _open(store, 2, run_id="run-2")
        _open(store, 3, run_id="run-1", checkpoint_id="late")
        ids = [r.record_id for r in store.pending()]
        assert ids == ["cp-000003-deadbeef", "cp-000002-deadbeef", "cp-000001-deadbeef"]
        assert [r.run_id for r in store.pending(run_id="run-2")] == ["run-2"]

    def test_decide_removes_from_pending(self):
        store = CheckpointStore()
        rec = _open(store)
        store.decide(rec.record_id, Decision(kind="approve"), decided_by="tester")
        assert store.pending() == []
        assert store.get(rec.record_id).decided_by == "tester"

    def test_decide_twice_errors_and_keeps_first(self):
        store = CheckpointStore()
        rec = _open(store)
        store.decide(rec.record_id, Decision(kind="approve"), decided_by="first")
        with pytest.raises(CheckpointError):
            store.decide(rec.record_id, Decision(kind="abort"), decided_by="second")
        after = store.get(rec.record_id)
        assert after.decision.kind == "approve"
        assert after.decided_by == "first"

    def test_decide_unknown_record(self):
        store = CheckpointStore()
        with pytest.raises(CheckpointError):
            store.decide("cp-000404-deadbeef", Decision(kind="approve"), decided_by="x")

    def test_decided_at_not_before_opened_at(self):
        store = CheckpointStore()
        rec = _open(store)
        store.decide(rec.record_id, Decision(kind="approve"), decided_by="t")
        after = store.get(rec.record_id)
        assert after.decided_at >= after.opened_at

    def test_record_round_trip(self):
        store = CheckpointStore()
        rec = _open(store)
        store.decide(
            rec.record_id,
            Decision(kind="revise", feedback="Add FDI series", rerun=True),
            decided_by="console",
        )
        doc = store.get(rec.record_id).to_dict()
        again = CheckpointRecord.from_dict(doc)
        assert again.decision.feedback == "Add FDI series"
        assert again.decided_by == "console"

    def test_wait_blocks_until_decided(self):
        store = CheckpointStore()
        rec = _open(store)
        results = []

        def waiter():
            results.append(store.wait(rec.record_id, timeout=5.0))

        t = threading.Thread(target=waiter)
        t.start()
        store.decide(rec.record_id, Decision(kind="abort"), decided_by="api")
        t.join(timeout=5.0)
        assert results and results[0].kind == "abort"

    def test_wait_timeout_returns_none(self):
        store = CheckpointStore()
        rec = _open(store)
        assert store.wait(rec.record_id, timeout=0.01) is None


class TestSources:
    def _record(self):
        store = CheckpointStore()
        return store, _open(store)

    def test_auto_approve_always_approves(self):
        _, rec = self._record()
        src = AutoApproveSource()
        for _ in range(3):
            assert src.next_decision(rec).kind == "approve"

    def test_scripted_consumed_in_order_then_closed(self):
        _, rec = self._record()
        src = ScriptedDecisionSource(
            [
                Decision(kind="approve"),
                Decision(kind="revise", feedback="x", rerun=False),
                Decision(kind="approve"),
            ]
        )
        kinds = [src.next_decision(rec).kind for _ in range(3)]
        assert kinds == ["approve", "revise", "approve"]
        assert src.next_decision(rec) is None
        assert src.remaining == 0

    def test_queue_source_sees_api_decision(self):
        store, rec = self._record()
        src = QueueSource(store)
        timer = threading.Timer(
            0.02, store.decide, args=(rec.record_id, Decision(kind="approve"), "api")
        )
        timer.start()
        decision = src.next_decision(rec, timeout=5.0)
        assert decision is not None and decision.kind == "approve"

    def test_queue_source_timeout_none(self):
        store, rec = self._record()
        src = QueueSource(store)
        assert src.next_decision(rec, timeout=0.01) is None

    def test_console_source_approve_and_revise(self):
        _, rec = self._record()
        answers = iter(["a"])
        src = ConsoleSource(input_fn=lambda _: next(answers), print_fn=lambda *_: None)
        assert src.next_decision(rec).kind == "approve"

        answers = iter(["r", "Add financial frictions component", "y"])
        src = ConsoleSource(input_fn=lambda _: next(answers), print_fn=lambda *_: None)
        d = src.next_decision(rec)
        assert d.kind == "revise" and d.rerun is True
        assert d.feedback == "Add financial frictions component"

        answers = iter(["r", "Trim the list", ""])
        src = ConsoleSource(input_fn=lambda _: next(answers), print_fn=lambda *_: None)
        assert src.next_decision(rec).rerun is None

    def test_console_source_retries_garbage_then_abort(self):
        _, rec = self._record()
        answers = iter(["huh", "b"])
        src = ConsoleSource(input_fn=lambda _: next(answers), print_fn=lambda *_: None)
        assert src.next_decision(rec).kind == "abort"

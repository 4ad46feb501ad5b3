"""Decision sources: where checkpoint answers come from.

A source implements ``next_decision(record, timeout) -> Optional[Decision]``
and exposes a ``name`` used as ``decided_by`` when the orchestrator records
the answer.  Returning None means no answer: either the timeout elapsed or the
source has nothing left to say, and the checkpoint policy decides what happens
next (approve, abort, or treat the source as closed).
"""

from __future__ import annotations

import json
import logging
from typing import List, Optional, Sequence

from .store import CheckpointRecord, CheckpointStore, Decision

logger = logging.getLogger(__name__)


class AutoApproveSource:
    """Approves everything immediately; the headless/test default."""

    name = "auto-approve"

    def next_decision(
        self, record: CheckpointRecord, timeout: Optional[float] = None
    ) -> Optional[Decision]:
        return Decision(kind="approve")


class ScriptedDecisionSource:
    """Replays a fixed list of decisions in order; exhausted means closed."""

    name = "scripted"

    def __init__(self, decisions: Sequence[Decision]) -> None:
        self._queue: List[Decision] = list(decisions)

    def next_decision(
        self, record: CheckpointRecord, timeout: Optional[float] = None
    ) -> Optional[Decision]:
        if not self._queue:
            return None
        return self._queue.pop(0)

    @property
    def remaining(self) -> int:
        return len(self._queue)


class ConsoleSource:
    """Asks on the terminal.

    Note: ``input`` cannot be interrupted portably, so timed policies behave
    like ``block`` while this source is attached; the timer applies only to
    sources that actually honour the timeout argument.
    """

    name = "console"

    def __init__(self, input_fn=input, print_fn=print) -> None:
        self._input = input_fn
        self._print = print_fn

    def next_decision(
        self, record: CheckpointRecord, timeout: Optional[float] = None
    ) -> Optional[Decision]:
        self._print(f"CHECKPOINT: {record.prompt}")
        preview = record.payload.get("text") or json.dumps(record.payload)[:2000]
        if preview:
            self._print(preview)
        while True:
            try:
                raw = self._input("Decision [a]pprove / [r]evise / a[b]ort: ").strip().lower()
            except EOFError:
                return None
            if raw in ("a", "approve"):
                return Decision(kind="approve")
            if raw in ("b", "abort", "x"):
                return Decision(kind="abort")
            if raw in ("r", "revise"):
                feedback = self._input("Feedback: ").strip()
                if not feedback:
                    self._print("Revision needs feedback text.")
                    continue
                rerun_raw = self._input(
                    "Re-run the stage with this feedback? [y/n, enter = stage default]: "
                ).strip().lower()
                rerun = None if not rerun_raw else rerun_raw in ("y", "yes")
                return Decision(kind="revise", feedback=feedback, rerun=rerun)
            self._print(f"Unrecognized choice: {raw!r}")


class QueueSource:
    """Waits for a decision delivered through the store (e.g. the HTTP API)."""

    name = "api"

    def __init__(self, store: CheckpointStore) -> None:
        self._store = store

    def next_decision(
        self, record: CheckpointRecord, timeout: Optional[float] = None
    ) -> Optional[Decision]:
        return self._store.wait(record.record_id, timeout=timeout)

"""Speaker selection and termination checks (pure functions)."""

from __future__ import annotations

import re
from typing import Iterable, Optional, Sequence, Set

from ..core.types import Message, TerminationCondition


class SchedulingError(RuntimeError):
    """No speaker can be selected from the roster."""


def next_speaker(
    roster: Sequence[str],
    last: Optional[str],
    disabled: Optional[Set[str]] = None,
) -> str:
    """Pick the next speaker cyclically after *last*, skipping disabled agents.

    With ``last=None`` the first enabled roster member speaks.  Raises
    :class:`SchedulingError` when the roster is empty or fully disabled.
    """
    disabled = disabled or set()
    if not roster:
        raise SchedulingError("roster is empty")
    enabled = [name for name in roster if name not in disabled]
    if not enabled:
        raise SchedulingError("every agent in the roster is disabled")
    if last is None or last not in roster:
        return enabled[0]
    start = roster.index(last)
    n = len(roster)
    for offset in range(1, n + 1):
        candidate = roster[(start + offset) % n]
        if candidate not in disabled:
            return candidate
    raise SchedulingError("no enabled speaker found")  # unreachable


def sentinel_present(content: str, token: str) -> bool:
    """True when *token* appears in *content* as a standalone word.

    Case-sensitive; word characters may not touch the token on either side,
    so ``TERMINATE.`` matches but ``RETERMINATE`` and ``terminate`` do not.
    """
    pattern = r"(?<!\w)" + re.escape(token) + r"(?!\w)"
    return re.search(pattern, content) is not None


def check_termination(
    transcript: Sequence[Message],
    condition: TerminationCondition,
    stage_start: int,
    roster: Optional[Iterable[str]] = None,
) -> bool:
    """Evaluate a termination condition over the stage's portion of the transcript.

    Only messages at or after index *stage_start* count; only agent-output
    messages participate.  ``all-spoken`` needs the stage roster.
    """
    outputs = [m for m in transcript[stage_start:] if m.kind == "agent-output"]
    if condition.variant == "sentinel":
        return any(sentinel_present(m.content, condition.token or "") for m in outputs)
    if condition.variant == "max-turns":
        return len(outputs) >= (condition.turns or 1)
    # all-spoken
    if roster is None:
        raise ValueError("all-spoken termination requires the stage roster")
    rounds = condition.rounds or 1
    counts = {name: 0 for name in roster}
    for m in outputs:
        if m.sender in counts:
            counts[m.sender] += 1
    return all(c >= rounds for c in counts.values())

"""Escalation classification and adaptive stage fallbacks.

``classify_and_escalate`` is a pure routing function: given what went wrong
and the owning agent's policy it decides retry / route-to-agent /
route-to-human / fail-stage.  ``apply_adaptive_fallback`` swaps in the next
alternative configuration for a failed stage without ever changing its id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..core.types import EscalationPolicy, StageSpec

ISSUES = ("tool-failure", "malformed-completion", "timeout", "quality-flag")
ACTIONS = ("retry", "route-to-agent", "route-to-human", "fail-stage")


@dataclass(frozen=True)
class EscalationEvent:
    """One observed failure, with its attempt ordinal (1-based)."""

    source_agent: str
    issue: str
    attempt: int
    detail: str = ""

    def __post_init__(self) -> None:
        if self.issue not in ISSUES:
            raise ValueError(f"unknown escalation issue: {self.issue!r}")
        if self.attempt < 1:
            raise ValueError("attempt ordinals start at 1")

    def to_dict(self) -> dict:
        return {
            "source_agent": self.source_agent,
            "issue": self.issue,
            "attempt": self.attempt,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class EscalationAction:
    variant: str  # one of ACTIONS
    target: Optional[str] = None  # handler agent for route-to-agent

    def to_dict(self) -> dict:
        doc = {"variant": self.variant}
        if self.target is not None:
            doc["target"] = self.target
        return doc


def classify_and_escalate(event: EscalationEvent, policy: EscalationPolicy) -> EscalationAction:
    """Decide how to handle a failure.

    Attempts up to ``max_retries`` are retried in place, so a policy with
    ``max_retries=r`` allows r+1 total attempts before escalation.  After
    that: the handler agent is consulted if one is named, else a human
    checkpoint opens if ``then_human``, else the stage fails.
    """
    if event.attempt <= policy.max_retries:
        return EscalationAction("retry")
    if policy.handler_agent:
        return EscalationAction("route-to-agent", target=policy.handler_agent)
    if policy.then_human:
        return EscalationAction("route-to-human")
    return EscalationAction("fail-stage")


class FallbacksExhausted(RuntimeError):
    """Every alternative configuration for the stage has been tried."""


def apply_adaptive_fallback(stage: StageSpec, failure_count: int) -> StageSpec:
    """Return the stage configured with its ``failure_count``-th fallback.

    ``failure_count`` is 1-based: the first failure selects the first declared
    fallback.  Raises :class:`FallbacksExhausted` when no alternative remains.
    The returned stage always keeps the original id.
    """
    if failure_count < 1:
        raise ValueError("failure_count is 1-based")
    if failure_count > len(stage.fallbacks):
        raise FallbacksExhausted(
            f"stage {stage.id!r}: {failure_count} failure(s), only "
            f"{len(stage.fallbacks)} fallback(s) declared"
        )
    return stage.with_fallback(stage.fallbacks[failure_count - 1])

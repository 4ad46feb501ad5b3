"""Per-agent turn execution: request assembly, tool-call parsing, the tool loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from .core.types import AgentSpec, Message, VISIBLE_KINDS
from .orchestrator.escalation import EscalationEvent, classify_and_escalate
from .toolkit.registry import ToolContext, ToolRegistry, ToolResult

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 50
DEFAULT_LOOP_LIMIT = 8
DEFAULT_MAX_OUTPUT_TOKENS = 2048

FINISH_REASONS = ("stop", "tool-calls", "length", "error")


class MalformedCompletionError(RuntimeError):
    """A completion's tool calls could not be interpreted."""


@dataclass(frozen=True)
class DecodeSettings:
    temperature: float = 0.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ToolCall:
    """A tool invocation requested by a completion (arguments still raw)."""

    tool: str
    arguments: Any = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"tool": self.tool, "arguments": self.arguments}


@dataclass(frozen=True)
class Completion:
    text: str = ""
    tool_calls: Tuple[ToolCall, ...] = ()
    finish: str = "stop"

    def __post_init__(self) -> None:
        if self.finish not in FINISH_REASONS:
            raise ValueError(f"unknown finish reason: {self.finish!r}")
        if self.finish == "tool-calls" and not self.tool_calls:
            raise ValueError("finish=tool-calls requires at least one tool call")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "text": self.text,
            "tool_calls": [c.to_dict() for c in self.tool_calls],
            "finish": self.finish,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Completion":
        return cls(
            text=doc.get("text", ""),
            tool_calls=tuple(
                ToolCall(tool=c["tool"], arguments=c.get("arguments", {}))
                for c in doc.get("tool_calls", [])
            ),
            finish=doc.get("finish", "stop"),
        )


@dataclass(frozen=True)
class ModelRequest:
    """Everything a backend needs for one completion."""

    agent: str
    model: str
    system: str
    dialogue: Tuple[Tuple[str, str], ...]
    tool_menu: Tuple[Dict[str, Any], ...] = ()
    decode: DecodeSettings = field(default_factory=DecodeSettings)

    def __post_init__(self) -> None:
        if not self.system:
            raise ValueError("system message must be non-empty")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "agent": self.agent,
            "model": self.model,
            "system": self.system,
            "dialogue": [list(pair) for pair in self.dialogue],
            "tool_menu": list(self.tool_menu),
            "decode": self.decode.to_dict(),
        }


def assemble_request(
    agent: AgentSpec,
    transcript: Sequence[Message],
    task: str,
    window: int = DEFAULT_WINDOW,
    tool_menu: Tuple[Dict[str, Any], ...] = (),
    decode: Optional[DecodeSettings] = None,
    model_override: Optional[str] = None,
) -> ModelRequest:
    """Build the dialogue an agent sees for its turn.

    The dialogue starts with the stage task, then the last *window* visible
    messages (agent outputs, tool results, human feedback) in transcript
    order.  Control messages are always included regardless of the window.
    """
    visible = [m for m in transcript if m.kind in VISIBLE_KINDS]
    windowed = visible[-window:] if window >= 0 else visible
    keep = {id(m) for m in windowed}
    dialogue: List[Tuple[str, str]] = [("task", task)]
    for m in transcript:
        if m.kind == "control" or id(m) in keep:
            dialogue.append((m.sender, m.content))
    return ModelRequest(
        agent=agent.name,
        model=model_override or agent.model,
        system=agent.system_message or f"You are {agent.name}.",
        dialogue=tuple(dialogue),
        tool_menu=tool_menu,
        decode=decode or DecodeSettings(),
    )


@dataclass(frozen=True)
class ToolInvocation:
    name: str
    args: Dict[str, Any]


def parse_tool_calls(completion: Completion) -> List[ToolInvocation]:
    """Decode a completion's tool calls into (name, argument-dict) pairs.

    Backends may deliver arguments as JSON text or as an already-parsed
    document; anything that does not decode to an object is malformed.
    """
    invocations: List[ToolInvocation] = []
    for call in completion.tool_calls:
        args = call.arguments
        if isinstance(args, str):
            try:
                args = json.loads(args)
            except json.JSONDecodeError as exc:
                raise MalformedCompletionError(
                    f"tool call {call.tool!r} carries unparseable arguments: {exc}"
                ) from exc
        if args is None:
            args = {}
        if not isinstance(args, dict):
            raise MalformedCompletionError(
                f"tool call {call.tool!r} arguments must be an object, got {type(args).__name__}"
            )
        invocations.append(ToolInvocation(name=call.tool, args=args))
    return invocations


class TurnRecorder:
    """Hooks the orchestrator uses to mirror turn activity into provenance.

    The base implementation records nothing; the engine overrides the methods
    it cares about.
    """

    def on_backend_call(self, request: ModelRequest, turn_index: int) -> None:
        pass

    def on_backend_reply(
        self,
        request: ModelRequest,
        turn_index: int,
        completion: Optional[Completion],
        error: str = "",
    ) -> None:
        pass

    def on_tool_invoke(self, agent: str, name: str, args: Dict[str, Any], attempt: int) -> None:
        pass

    def on_tool_result(
        self, agent: str, name: str, attempt: int, ok: bool, text: str = "", error: str = ""
    ) -> None:
        pass


@dataclass
class TurnOutcome:
    """Result of one agent turn."""

    messages: List[Message] = field(default_factory=list)
    escalation: Optional[EscalationEvent] = None
    output: Optional[Message] = None  # the final agent-output, if produced

    @property
    def ok(self) -> bool:
        return self.output is not None


def step_agent(
    agent: AgentSpec,
    *,
    transcript: Sequence[Message],
    task: str,
    backend: Any,
    registry: ToolRegistry,
    toolctx: ToolContext,
    new_id: Callable[[str], str],
    now: Callable[[], Any],
    run_id: str,
    append: Callable[[Message], None],
    recorder: Optional[TurnRecorder] = None,
    window: int = DEFAULT_WINDOW,
    loop_limit: int = DEFAULT_LOOP_LIMIT,
    decode: Optional[DecodeSettings] = None,
    model_override: Optional[str] = None,
) -> TurnOutcome:
    """Run one agent turn.

    Completions alternate with tool rounds until the agent answers in plain
    text or the budget runs out: at most ``loop_limit`` backend calls and
    ``loop_limit - 1`` executed tool invocations per turn.  Tool failures are
    retried per the agent's escalation policy; an exhausted policy ends the
    turn with an escalation instead of an output.
    """
    recorder = recorder or TurnRecorder()
    outcome = TurnOutcome()
    policy = agent.escalation_policy
    menu = tuple(registry.spec(name).menu_entry() for name in agent.tools if name in registry)
    working: List[Message] = list(transcript)
    prev_id = working[-1].id if working else None
    turn_result_ids: List[str] = []

    def commit(message: Message) -> None:
        append(message)
        working.append(message)
        outcome.messages.append(message)

    def escalate(issue: str, attempt: int, detail: str) -> TurnOutcome:
        outcome.escalation = EscalationEvent(
            source_agent=agent.name, issue=issue, attempt=attempt, detail=detail
        )
        return outcome

    calls = 0
    invocations_done = 0
    while calls < loop_limit:
        request = assemble_request(
            agent, working, task, window=window, tool_menu=menu,
            decode=decode, model_override=model_override,
        )
        turn_index = calls
        recorder.on_backend_call(request, turn_index)
        try:
            completion = backend.complete(request)
        except Exception as exc:
            recorder.on_backend_reply(request, turn_index, None, error=str(exc))
            return escalate("timeout", 1, f"backend: {exc}")
        recorder.on_backend_reply(request, turn_index, completion)
        calls += 1

        try:
            invocations = parse_tool_calls(completion)
        except MalformedCompletionError as exc:
            return escalate("malformed-completion", 1, str(exc))

        if not invocations:
            parents = tuple(turn_result_ids) or ((prev_id,) if prev_id else ())
            output = Message(
                id=new_id("msg"),
                run_id=run_id,
                sender=agent.name,
                kind="agent-output",
                content=completion.text,
                parents=parents,
                timestamp=now(),
            )
            commit(output)
            outcome.output = output
            return outcome

        if calls >= loop_limit:
            break  # tools requested but no budget remains for the reply

        for invocation in invocations:
            if invocations_done >= loop_limit - 1:
                return escalate(
                    "quality-flag", 1,
                    f"tool budget exhausted ({loop_limit - 1} invocations) without an answer",
                )
            call_msg = Message(
                id=new_id("msg"),
                run_id=run_id,
                sender=agent.name,
                kind="tool-call",
                content=json.dumps(
                    {"tool": invocation.name, "arguments": invocation.args}, sort_keys=True
                ),
                parents=(prev_id,) if prev_id else (),
                timestamp=now(),
            )
            commit(call_msg)
            prev_id = call_msg.id

            attempt = 0
            result: Optional[ToolResult] = None
            while True:
                attempt += 1
                recorder.on_tool_invoke(agent.name, invocation.name, invocation.args, attempt)
                try:
                    result = registry.invoke(invocation.name, invocation.args, toolctx)
                except Exception as exc:
                    recorder.on_tool_result(agent.name, invocation.name, attempt, False, error=str(exc))
                    event = EscalationEvent(
                        source_agent=agent.name,
                        issue="tool-failure",
                        attempt=attempt,
                        detail=f"{invocation.name}: {exc}",
                    )
                    if classify_and_escalate(event, policy).variant == "retry":
                        continue
                    outcome.escalation = event
                    return outcome
                recorder.on_tool_result(agent.name, invocation.name, attempt, True, text=result.text)
                break
            invocations_done += 1

            result_msg = Message(
                id=new_id("msg"),
                run_id=run_id,
                sender="system",
                kind="tool-result",
                content=result.text,
                attachments=result.attachments,
                parents=(call_msg.id,),
                timestamp=now(),
            )
            commit(result_msg)
            turn_result_ids.append(result_msg.id)
            prev_id = result_msg.id

    return escalate(
        "quality-flag", 1, f"no plain-text answer within the loop limit ({loop_limit})"
    )

"""Model backends: scripted lookup tables, a live chat-completion client, and
a recorded backend that replays a previous run's replies in order."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from .canonical import digest
from .runtime import Completion, ModelRequest, ToolCall

logger = logging.getLogger(__name__)

SCRIPT_FORMAT_VERSION = 1

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o-mini"
DEFAULT_TIMEOUT = 120.0


class BackendError(RuntimeError):
    """A backend could not produce a completion."""


class ScriptMissError(BackendError):
    """Strict script has no entry for the requested (agent, turn)."""


class ReplayMismatchError(BackendError):
    """Replay saw a different call sequence than was recorded."""


class ScriptFormatError(ValueError):
    """A script document does not match the published format."""


# ---------------------------------------------------------------------------
# Scripted backend


@dataclass(frozen=True)
class ScriptedBackendScript:
    """Completions keyed by (agent name, turn index).

    The turn index counts backend calls made *by that agent* over the whole
    run, starting at 0.  A ``"*"`` turn matches any index without an exact
    entry.  Strict scripts fail on a miss; lax scripts fall back to a
    deterministic placeholder reply.
    """

    entries: Dict[Tuple[str, Any], Completion] = field(default_factory=dict)
    strict: bool = False

    def __post_init__(self) -> None:
        for agent, turn in self.entries:
            if turn != "*" and (not isinstance(turn, int) or turn < 0):
                raise ScriptFormatError(
                    f"script entry ({agent!r}, {turn!r}): turn must be a non-negative "
                    "integer or '*'"
                )

    def lookup(self, agent: str, turn: int) -> Optional[Completion]:
        hit = self.entries.get((agent, turn))
        if hit is None:
            hit = self.entries.get((agent, "*"))
        return hit

    def to_doc(self) -> Dict[str, Any]:
        entries = []
        for (agent, turn), completion in sorted(
            self.entries.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))
        ):
            entry: Dict[str, Any] = {"agent": agent, "turn": turn, "text": completion.text}
            if completion.tool_calls:
                entry["tool_calls"] = [c.to_dict() for c in completion.tool_calls]
            if completion.finish != ("tool-calls" if completion.tool_calls else "stop"):
                entry["finish"] = completion.finish
            entries.append(entry)
        return {
            "format_version": SCRIPT_FORMAT_VERSION,
            "strict": self.strict,
            "entries": entries,
        }

    def digest(self) -> str:
        return digest(self.to_doc())


def script_from_doc(doc: Dict[str, Any]) -> ScriptedBackendScript:
    """Parse an already-loaded script document (see docs/formats.md)."""
    if not isinstance(doc, dict):
        raise ScriptFormatError("script document must be a mapping")
    version = doc.get("format_version")
    if version != SCRIPT_FORMAT_VERSION:
        raise ScriptFormatError(
            f"unsupported script format_version: {version!r} (expected {SCRIPT_FORMAT_VERSION})"
        )
    unknown = sorted(set(doc) - {"format_version", "strict", "entries"})
    if unknown:
        raise ScriptFormatError(f"unknown script key(s): {', '.join(unknown)}")
    strict = doc.get("strict", False)
    if not isinstance(strict, bool):
        raise ScriptFormatError("strict must be a boolean")
    entries: Dict[Tuple[str, Any], Completion] = {}
    raw_entries = doc.get("entries", [])
    if not isinstance(raw_entries, list):
        raise ScriptFormatError("entries must be a list")
    for i, raw in enumerate(raw_entries):
        if not isinstance(raw, dict):
            raise ScriptFormatError(f"entries[{i}] must be a mapping")
        bad = sorted(set(raw) - {"agent", "turn", "text", "tool_calls", "finish"})
        if bad:
            raise ScriptFormatError(f"entries[{i}]: unknown key(s): {', '.join(bad)}")
        agent = raw.get("agent")
        if not isinstance(agent, str) or not agent:
            raise ScriptFormatError(f"entries[{i}]: agent must be a non-empty string")
        turn = raw.get("turn", "*")
        if turn != "*" and (isinstance(turn, bool) or not isinstance(turn, int) or turn < 0):
            raise ScriptFormatError(
                f"entries[{i}]: turn must be a non-negative integer or '*'"
            )
        if (agent, turn) in entries:
            raise ScriptFormatError(f"entries[{i}]: duplicate entry for ({agent}, {turn})")
        calls = []
        for j, rc in enumerate(raw.get("tool_calls") or []):
            if not isinstance(rc, dict) or "tool" not in rc:
                raise ScriptFormatError(f"entries[{i}].tool_calls[{j}] must name a tool")
            calls.append(ToolCall(tool=rc["tool"], arguments=rc.get("arguments", {})))
        finish = raw.get("finish") or ("tool-calls" if calls else "stop")
        try:
            entries[(agent, turn)] = Completion(
                text=raw.get("text", ""), tool_calls=tuple(calls), finish=finish
            )
        except ValueError as exc:
            raise ScriptFormatError(f"entries[{i}]: {exc}") from exc
    return ScriptedBackendScript(entries=entries, strict=strict)


def load_script(path: str) -> ScriptedBackendScript:
    """Load a backend script from a YAML file."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return script_from_doc(doc)


def placeholder_completion(agent: str, turn: int) -> Completion:
    """Deterministic filler reply for lax scripts; always terminates a stage."""
    return Completion(
        text=f"[{agent}] placeholder reply for turn {turn}. TERMINATE", finish="stop"
    )


class ScriptedBackend:
    """Offline backend answering from a lookup table.

    Turn indices are tracked per agent across the whole run, so scripts stay
    stable when stages are reordered around an agent.
    """

    kind = "scripted"

    def __init__(self, script: Optional[ScriptedBackendScript] = None) -> None:
        self.script = script or ScriptedBackendScript()
        self._counters: Dict[str, int] = {}

    def complete(self, request: ModelRequest) -> Completion:
        turn = self._counters.get(request.agent, 0)
        self._counters[request.agent] = turn + 1
        hit = self.script.lookup(request.agent, turn)
        if hit is not None:
            return hit
        if self.script.strict:
            raise ScriptMissError(
                f"strict script has no entry for ({request.agent!r}, turn {turn})"
            )
        logger.debug("script miss for (%s, %d); using placeholder", request.agent, turn)
        return placeholder_completion(request.agent, turn)

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "strict": self.script.strict,
            "script_digest": self.script.digest(),
        }


# ---------------------------------------------------------------------------
# Live chat-completion backend

_FINISH_MAP = {"stop": "stop", "tool_calls": "tool-calls", "length": "length"}


def _wire_messages(request: ModelRequest) -> List[Dict[str, str]]:
    messages = [{"role": "system", "content": request.system}]
    for sender, text in request.dialogue:
        if sender == "task":
            messages.append({"role": "user", "content": text})
        elif sender == request.agent:
            messages.append({"role": "assistant", "content": text})
        else:
            messages.append({"role": "user", "content": f"[{sender}] {text}"})
    return messages


def _wire_tools(request: ModelRequest) -> List[Dict[str, Any]]:
    tools = []
    for entry in request.tool_menu:
        properties = {
            name: {"type": ptype} for name, ptype in entry.get("params", {}).items()
        }
        tools.append(
            {
                "type": "function",
                "function": {
                    "name": entry["name"],
                    "description": entry.get("description", ""),
                    "parameters": {
                        "type": "object",
                        "properties": properties,
                        "required": entry.get("required", []),
                    },
                },
            }
        )
    return tools


class HttpBackend:
    """Client for the ubiquitous chat-completion HTTP interface.

    Configuration falls back to ``AGENTLOOM_API_BASE``, ``AGENTLOOM_API_KEY``
    and ``AGENTLOOM_MODEL``.  ``model_map`` translates binding names from
    pipeline documents into concrete model identifiers.
    """

    kind = "http"

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        model_map: Optional[Dict[str, str]] = None,
        timeout: float = DEFAULT_TIMEOUT,
        client: Any = None,
        max_attempts: int = 3,
    ) -> None:
        import httpx

        self.base_url = (base_url or os.environ.get("AGENTLOOM_API_BASE") or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("AGENTLOOM_API_KEY", "")
        self.model = model or os.environ.get("AGENTLOOM_MODEL") or DEFAULT_MODEL
        self.model_map = dict(model_map or {})
        self.timeout = timeout
        self.max_attempts = max_attempts
        self._client = client or httpx.Client(timeout=timeout)

    def resolve_model(self, binding: str) -> str:
        if binding in self.model_map:
            return self.model_map[binding]
        if binding == "default" or not binding:
            return self.model
        return binding

    def complete(self, request: ModelRequest) -> Completion:
        import httpx

        body: Dict[str, Any] = {
            "model": self.resolve_model(request.model),
            "messages": _wire_messages(request),
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_output_tokens,
        }
        if request.decode.seed is not None:
            body["seed"] = request.decode.seed
        tools = _wire_tools(request)
        if tools:
            body["tools"] = tools
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        url = f"{self.base_url}/chat/completions"
        last_error: Optional[str] = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(min(0.5 * 2 ** (attempt - 1), 8.0))
            try:
                response = self._client.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                logger.warning("backend attempt %d failed: %s", attempt + 1, exc)
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"retryable status {response.status_code}"
                logger.warning("backend attempt %d got status %d", attempt + 1, response.status_code)
                continue
            if response.status_code != 200:
                raise BackendError(f"backend returned status {response.status_code}: {response.text[:500]}")
            return self._decode(response.json())
        raise BackendError(last_error or "backend unavailable")

    @staticmethod
    def _decode(payload: Dict[str, Any]) -> Completion:
        try:
            choice = payload["choices"][0]
            message = choice.get("message", {})
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        calls = []
        for rc in message.get("tool_calls") or []:
            fn = rc.get("function", {})
            calls.append(ToolCall(tool=fn.get("name", ""), arguments=fn.get("arguments", "{}")))
        finish = _FINISH_MAP.get(choice.get("finish_reason", "stop"), "error")
        if calls and finish == "stop":
            finish = "tool-calls"
        return Completion(text=message.get("content") or "", tool_calls=tuple(calls), finish=finish)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "base_url": self.base_url, "model": self.model}


# ---------------------------------------------------------------------------
# Recorded backend (replay)


@dataclass(frozen=True)
class RecordedReply:
    """One backend exchange lifted from a provenance log, in global order."""

    agent: str
    completion: Optional[Completion] = None
    error: str = ""


class RecordedBackend:
    """Replays completions in the exact global order they were recorded.

    Each call must come from the agent that made it originally; a different
    caller means the replayed run diverged from the recording.
    """

    kind = "recorded"

    def __init__(self, replies: Sequence[RecordedReply]) -> None:
        self._replies = list(replies)
        self._cursor = 0

    def complete(self, request: ModelRequest) -> Completion:
        if self._cursor >= len(self._replies):
            raise ReplayMismatchError(
                f"recording exhausted after {len(self._replies)} calls; "
                f"unexpected extra call by {request.agent!r}"
            )
        reply = self._replies[self._cursor]
        self._cursor += 1
        if reply.agent != request.agent:
            raise ReplayMismatchError(
                f"call {self._cursor} was recorded for {reply.agent!r} "
                f"but replay saw {request.agent!r}"
            )
        if reply.error:
            raise BackendError(reply.error)
        assert reply.completion is not None
        return reply.completion

    @property
    def exhausted(self) -> bool:
        return self._cursor >= len(self._replies)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "calls": len(self._replies)}

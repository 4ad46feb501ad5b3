"""Tool registry: declarations, argument validation, invocation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from threading import Lock
from typing import Any, Callable, Dict, List, Optional, Tuple

from ..canonical import digest
from ..core.types import Attachment

logger = logging.getLogger(__name__)

PARAM_TYPES = ("string", "integer", "number", "boolean", "array", "object")


class ToolError(Exception):
    """Base class for tool-level failures."""


class DuplicateToolError(ToolError):
    pass


class UnknownToolError(ToolError):
    pass


class ToolArgumentError(ToolError):
    """Arguments failed schema validation; the implementation never ran."""


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str = "string"
    required: bool = True
    description: str = ""

    def __post_init__(self) -> None:
        if self.type not in PARAM_TYPES:
            raise ValueError(f"unknown parameter type: {self.type!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "type": self.type,
            "required": self.required,
            "description": self.description,
        }


@dataclass(frozen=True)
class RetrySpec:
    """Transport-level retry for network tools (not the agent escalation loop)."""

    max: int = 0
    backoff: float = 0.5


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: Tuple[ToolParam, ...] = ()
    result: str = "text"
    effect: str = "pure"  # pure | network | filesystem
    timeout: Optional[float] = None
    retry: RetrySpec = field(default_factory=RetrySpec)

    def __post_init__(self) -> None:
        if self.effect not in ("pure", "network", "filesystem"):
            raise ValueError(f"unknown effect: {self.effect!r}")
        if self.effect == "pure" and self.timeout is not None:
            raise ValueError("pure tools have no timeout semantics")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "result": self.result,
            "effect": self.effect,
            "timeout": self.timeout,
            "retry": {"max": self.retry.max, "backoff": self.retry.backoff},
        }

    def menu_entry(self) -> Dict[str, Any]:
        """Compact form surfaced to model backends as the tool menu."""
        return {
            "name": self.name,
            "description": self.description,
            "params": {p.name: p.type for p in self.params},
            "required": [p.name for p in self.params if p.required],
        }


@dataclass
class ToolResult:
    """What a tool hands back to the conversation."""

    text: str
    attachments: Tuple[Attachment, ...] = ()
    data: Any = None


@dataclass
class ToolContext:
    """Ambient facilities passed to tool implementations."""

    backend: Any = None  # model backend, for prompt-template tools
    fixtures: bool = False
    seed: Optional[int] = None
    http: Any = None  # injectable httpx.Client for network tools
    config: Dict[str, str] = field(default_factory=dict)


_JSON_TYPES = {
    "string": str,
    "integer": int,
    "number": (int, float),
    "boolean": bool,
    "array": list,
    "object": dict,
}


def _check_args(spec: ToolSpec, args: Dict[str, Any]) -> None:
    declared = {p.name: p for p in spec.params}
    unknown = sorted(set(args) - set(declared))
    if unknown:
        raise ToolArgumentError(f"{spec.name}: unknown argument(s): {', '.join(unknown)}")
    for name, p in declared.items():
        if name not in args:
            if p.required:
                raise ToolArgumentError(f"{spec.name}: missing required argument {name!r}")
            continue
        value = args[name]
        expected = _JSON_TYPES[p.type]
        if p.type in ("integer", "number") and isinstance(value, bool):
            raise ToolArgumentError(f"{spec.name}: argument {name!r} expects {p.type}, got bool")
        if not isinstance(value, expected):
            raise ToolArgumentError(
                f"{spec.name}: argument {name!r} expects {p.type}, got {type(value).__name__}"
            )


Implementation = Callable[[Dict[str, Any], ToolContext], Any]


class ToolRegistry:
    """Thread-safe name -> (spec, implementation) table."""

    def __init__(self) -> None:
        self._tools: Dict[str, Tuple[ToolSpec, Implementation]] = {}
        self._lock = Lock()

    def register(self, spec: ToolSpec, implementation: Implementation) -> None:
        with self._lock:
            if spec.name in self._tools:
                raise DuplicateToolError(f"tool {spec.name!r} is already registered")
            self._tools[spec.name] = (spec, implementation)

    def names(self) -> List[str]:
        return sorted(self._tools)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def spec(self, name: str) -> ToolSpec:
        try:
            return self._tools[name][0]
        except KeyError:
            raise UnknownToolError(f"no tool named {name!r}") from None

    def specs(self) -> List[ToolSpec]:
        return [self._tools[n][0] for n in self.names()]

    def registry_digest(self) -> str:
        """Content digest over every registered declaration, order-independent."""
        return digest([s.to_dict() for s in self.specs()])

    def invoke(self, name: str, args: Dict[str, Any], ctx: ToolContext) -> ToolResult:
        """Validate *args* against the declaration, then run the tool."""
        spec, impl = self._tools.get(name, (None, None))
        if spec is None:
            raise UnknownToolError(f"no tool named {name!r}")
        _check_args(spec, dict(args))
        logger.debug("invoking tool %s", name)
        result = impl(dict(args), ctx)
        if isinstance(result, ToolResult):
            return result
        return ToolResult(text=str(result))

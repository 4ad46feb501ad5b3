"""Tool registry, concrete research/data tools, stubs, and prompt tools."""

from .registry import (
    RetrySpec,
    ToolArgumentError,
    ToolContext,
    ToolParam,
    ToolRegistry,
    ToolResult,
    ToolSpec,
)
from .standard import build_standard_registry

__all__ = [
    "RetrySpec",
    "ToolArgumentError",
    "ToolContext",
    "ToolParam",
    "ToolRegistry",
    "ToolResult",
    "ToolSpec",
    "build_standard_registry",
]

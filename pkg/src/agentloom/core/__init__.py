"""Pipeline definitions, validation, and run state."""

from .document import (
    load_pipeline_spec,
    serialize_pipeline_spec,
    spec_digest,
    spec_to_doc,
)
from .runs import bind_params, new_run
from .types import (
    AgentSpec,
    Attachment,
    Binding,
    CheckpointPolicy,
    CheckpointSpec,
    EscalationPolicy,
    FallbackSpec,
    Message,
    ParameterError,
    ParamSpec,
    PipelineSpec,
    RunState,
    RunStatus,
    SpecError,
    StageSpec,
    StateTransitionError,
    TerminationCondition,
    transcript_digest,
)
from .validation import ValidationReport, Violation, validate_pipeline_spec

__all__ = [
    "AgentSpec",
    "Attachment",
    "Binding",
    "CheckpointPolicy",
    "CheckpointSpec",
    "EscalationPolicy",
    "FallbackSpec",
    "Message",
    "ParamSpec",
    "ParameterError",
    "PipelineSpec",
    "RunState",
    "RunStatus",
    "SpecError",
    "StageSpec",
    "StateTransitionError",
    "TerminationCondition",
    "ValidationReport",
    "Violation",
    "bind_params",
    "load_pipeline_spec",
    "new_run",
    "serialize_pipeline_spec",
    "spec_digest",
    "spec_to_doc",
    "transcript_digest",
    "validate_pipeline_spec",
]

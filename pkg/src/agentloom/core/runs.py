"""Run construction: parameter binding and fresh run state."""

from __future__ import annotations

import logging
from typing import Any, Dict, Mapping, Optional

from ..canonical import utcnow
from ..ids import run_identifier
from .document import spec_digest
from .types import ParameterError, ParamSpec, PipelineSpec, RunState, RunStatus

logger = logging.getLogger(__name__)

_PY_TYPES = {"string": str, "int": int, "float": float, "bool": bool}


def _bind_one(param: ParamSpec, value: Any) -> Any:
    expected = _PY_TYPES[param.type]
    if param.type == "float" and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, expected) or (param.type == "int" and isinstance(value, bool)):
        raise ParameterError(
            f"parameter {param.name!r} expects {param.type}, got {type(value).__name__}"
        )
    if param.type == "string" and param.required and not value.strip():
        raise ParameterError(f"required parameter {param.name!r} is empty")
    return value


def bind_params(spec: PipelineSpec, params: Mapping[str, Any]) -> Dict[str, Any]:
    """Check supplied parameters against the declarations and fill defaults."""
    declared = {p.name: p for p in spec.params}
    unknown = sorted(set(params) - set(declared))
    if unknown:
        raise ParameterError(f"unknown parameter(s): {', '.join(unknown)}")
    bound: Dict[str, Any] = {}
    for name, pspec in declared.items():
        if name in params and params[name] is not None:
            bound[name] = _bind_one(pspec, params[name])
        elif pspec.default is not None:
            bound[name] = pspec.default
        elif pspec.required:
            raise ParameterError(f"missing required parameter {name!r}")
        else:
            bound[name] = "" if pspec.type == "string" else None
    return bound


def new_run(
    spec: PipelineSpec,
    params: Mapping[str, Any],
    seed: int,
    run_id: Optional[str] = None,
) -> RunState:
    """Create a pending run with bound parameters.

    Everything about the result is a pure function of (spec, params, seed)
    apart from the start timestamp; pass ``run_id`` to override the derived id.
    """
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ParameterError("seed must be an integer")
    bound = bind_params(spec, params)
    digest = spec_digest(spec)
    rid = run_id or run_identifier(seed, digest, bound)
    first_stage = spec.stages[0].id if spec.stages else None
    run = RunState(
        run_id=rid,
        spec=spec,
        spec_hash=digest,
        seed=seed,
        params=bound,
        status=RunStatus.PENDING,
        stage_cursor=first_stage,
        started_at=utcnow(),
    )
    logger.debug("created run %s for pipeline %s (seed=%d)", rid, spec.name, seed)
    return run

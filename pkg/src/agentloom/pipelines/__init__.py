"""Catalog of shipped reference pipelines.

Seven pipeline documents ship under ``catalog/``: four concrete teams
(ideation, literature, model, data) whose tools all resolve against the
standard registry, and three configuration-only rosters (implementation,
estimation, reporting) built from prompt-template tools.  :func:`catalog`
lists them; :func:`instantiate` binds user parameters into a runnable spec,
pruning stages whose enabling parameter was not supplied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional, Tuple

from ..core import (
    CheckpointSpec,
    ParamSpec,
    PipelineSpec,
    StageSpec,
    bind_params,
    load_pipeline_spec,
)
from ..orchestrator.engine import render_task

logger = logging.getLogger(__name__)

# Lifecycle order: this is also the order `catalog()` and the CLI list them in.
CATALOG_NAMES = (
    "ideation",
    "literature",
    "model",
    "data",
    "implementation",
    "estimation",
    "reporting",
)


@dataclass(frozen=True)
class CatalogEntry:
    """A shipped pipeline document, loaded and ready to instantiate."""

    name: str
    spec: PipelineSpec
    params: Tuple[ParamSpec, ...]
    checkpoints: int
    concrete: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "banner": self.spec.banner,
            "params": [{"name": p.name, **p.to_dict()} for p in self.params],
            "checkpoints": self.checkpoints,
            "concrete": self.concrete,
            "agents": list(self.spec.agent_names()),
            "stages": [s.id for s in self.spec.stages],
        }


def catalog_text(name: str) -> str:
    """Raw document text for one shipped pipeline (KeyError if unknown)."""
    if name not in CATALOG_NAMES:
        raise KeyError(f"unknown catalog pipeline: {name!r}")
    return (
        resources.files(__package__)
        .joinpath("catalog", f"{name}.yaml")
        .read_text(encoding="utf-8")
    )


@lru_cache(maxsize=None)
def entry(name: str) -> CatalogEntry:
    """Load one catalog entry by name (KeyError if unknown)."""
    spec = load_pipeline_spec(catalog_text(name))
    declared = spec.checkpoint_count
    return CatalogEntry(
        name=spec.name,
        spec=spec,
        params=spec.params,
        checkpoints=len(spec.declared_checkpoints()) if declared is None else declared,
        concrete=spec.concrete,
    )


def catalog() -> List[CatalogEntry]:
    """All shipped pipelines, in lifecycle order."""
    return [entry(name) for name in CATALOG_NAMES]


def instantiate(name: str, params: Optional[Mapping[str, Any]] = None) -> PipelineSpec:
    """Bind parameters into a catalog pipeline and return the resulting spec.

    Parameter values are substituted into stage task text, and stages guarded
    by a ``when:`` parameter are dropped entirely when that parameter is empty
    (together with any downstream references to them).  Raises KeyError for an
    unknown name and ParameterError for missing/ill-typed parameters.
    """
    base = entry(name).spec
    bound = bind_params(base, params or {})
    kept: List[StageSpec] = []
    dropped = set()
    for stage in base.stages:
        if stage.when is not None and not bound.get(stage.when):
            dropped.add(stage.id)
            logger.debug("instantiate(%s): dropping stage %s (no %r given)",
                         name, stage.id, stage.when)
            continue
        kept.append(_bind_stage(stage, bound, dropped))
    spec = replace(base, stages=tuple(kept))
    if dropped:
        # the declared count assumes the full document; recount what survived
        spec = replace(spec, checkpoint_count=len(spec.declared_checkpoints()))
    return spec


def _bind_stage(stage: StageSpec, bound: Mapping[str, Any], dropped: set) -> StageSpec:
    entry_bindings = tuple(
        (label, binding)
        for label, binding in stage.entry
        if not (binding.kind == "stage" and binding.ref in dropped)
    )
    checkpoint: Optional[CheckpointSpec] = stage.checkpoint
    if checkpoint is not None and checkpoint.payload_binding:
        checkpoint = replace(
            checkpoint,
            payload_binding=tuple(r for r in checkpoint.payload_binding if r not in dropped),
        )
    return replace(
        stage,
        task=render_task(stage.task, dict(bound)),
        entry=entry_bindings,
        checkpoint=checkpoint,
        when=None,
    )


__all__ = [
    "CATALOG_NAMES",
    "CatalogEntry",
    "catalog",
    "catalog_text",
    "entry",
    "instantiate",
]

"""The standard tool registry: every tool the shipped pipelines reference.

Concrete data/research implementations are registered both under their core
names and under the agent-facing ``*_tool`` names the pipeline documents use.
"""

from __future__ import annotations

import json
import logging
from typing import Any, Dict, List, Tuple

from ..canonical import digest
from . import datatools, research
from .calibrate import estimate_ar1, sensitivity_analysis
from .prompts import standard_prompt_tools
from .registry import ToolContext, ToolParam, ToolRegistry, ToolResult, ToolSpec
from .series import SeriesTable
from .stubs import standard_stub_tools

logger = logging.getLogger(__name__)


def _table(doc: Any) -> SeriesTable:
    if isinstance(doc, SeriesTable):
        return doc
    return SeriesTable.from_dict(doc)


# --------------------------------------------------------------- research --


def _arxiv_search():
    spec = ToolSpec(
        name="arxiv_search",
        description="Query the arXiv feed for paper records.",
        params=(
            ToolParam("query", "string"),
            ToolParam("max_results", "integer", required=False),
        ),
        result="records",
        effect="network",
        timeout=30.0,
    )

    def impl(args, ctx):
        records = research.arxiv_search(
            args["query"], args.get("max_results", 10), client=ctx.http
        )
        lines = [f"arxiv_search: {len(records)} record(s)"]
        lines += [f"- {r['title']}" for r in records]
        return ToolResult(text="\n".join(lines), data=records)

    return spec, impl


def _web_fetch():
    spec = ToolSpec(
        name="web_fetch",
        description="Fetch a web page and convert it to markdown.",
        params=(ToolParam("url", "string"),),
        result="document",
        effect="network",
        timeout=60.0,
    )

    def impl(args, ctx):
        doc = research.web_fetch(args["url"], client=ctx.http)
        return ToolResult(text=doc["markdown"], data=doc)

    return spec, impl


def _format_citations(name="format_citations"):
    spec = ToolSpec(
        name=name,
        description="Render a deduplicated author-year bibliography.",
        params=(
            ToolParam("entries", "array"),
            ToolParam("style", "string", required=False),
        ),
        result="text",
        effect="pure",
    )

    def impl(args, ctx):
        entries = [research.CitationEntry.from_dict(doc) for doc in args["entries"]]
        text, dropped = research.format_citations(entries, args.get("style", "author-year"))
        if dropped:
            text += f"\n\n({len(dropped)} duplicate(s) removed)"
        return ToolResult(text=text, data={"dropped": dropped})

    return spec, impl


# ------------------------------------------------------------- data tools --


def _generate_synthetic_series():
    spec = ToolSpec(
        name="generate_synthetic_series",
        description="Generate a deterministic AR(1) series table.",
        params=(
            ToolParam("length", "integer"),
            ToolParam("spec", "object"),
            ToolParam("seed", "integer"),
        ),
        result="table",
        effect="pure",
    )

    def impl(args, ctx):
        params = args["spec"]
        table = datatools.generate_synthetic_series(
            length=args["length"],
            mean=params.get("mean", 0.0),
            ar1=params.get("ar1", 0.0),
            noise_sd=params.get("noise_sd", 1.0),
            seed=args["seed"],
            frequency=params.get("frequency", "quarterly"),
            column=params.get("column", "synthetic"),
        )
        return ToolResult(
            text=f"Generated {len(table)} {table.frequency} observations",
            data=table.to_dict(),
        )

    return spec, impl


def _generate_synthetic_data_tool():
    spec = ToolSpec(
        name="generate_synthetic_data_tool",
        description="Create a synthetic test dataset from AR(1) parameters.",
        params=(
            ToolParam("length", "integer"),
            ToolParam("mean", "number"),
            ToolParam("ar1", "number"),
            ToolParam("noise_sd", "number"),
            ToolParam("seed", "integer", required=False),
        ),
        result="table",
        effect="pure",
    )

    def impl(args, ctx):
        seed = args.get("seed", ctx.seed or 0)
        table = datatools.generate_synthetic_series(
            length=args["length"],
            mean=args["mean"],
            ar1=args["ar1"],
            noise_sd=args["noise_sd"],
            seed=seed,
        )
        return ToolResult(
            text=f"Generated {len(table)} quarterly observations (seed {seed})",
            data=table.to_dict(),
        )

    return spec, impl


def _impute_missing():
    spec = ToolSpec(
        name="impute_missing",
        description="Fill gaps in a numeric series by linear interpolation.",
        params=(
            ToolParam("series", "array"),
            ToolParam("method", "string", required=False),
        ),
        result="series",
        effect="pure",
    )

    def impl(args, ctx):
        method = args.get("method", "linear")
        if method != "linear":
            raise datatools.DataToolError(f"unknown imputation method: {method!r}")
        filled = datatools.impute_missing(args["series"])
        gaps = sum(1 for v in args["series"] if v is None)
        return ToolResult(text=f"Imputed {gaps} value(s)", data=filled)

    return spec, impl


def _detect_outliers():
    spec = ToolSpec(
        name="detect_outliers",
        description="Flag outlying observations by z-score or IQR fences.",
        params=(
            ToolParam("series", "array"),
            ToolParam("method", "object", required=False),
        ),
        result="indices",
        effect="pure",
    )

    def impl(args, ctx):
        method = args.get("method") or {"kind": "zscore", "threshold": 3.0}
        kind = method.get("kind", "zscore")
        indices = datatools.detect_outliers(
            args["series"],
            method=kind,
            threshold=method.get("threshold", 3.0),
            k=method.get("k", 1.5),
        )
        return ToolResult(text=f"Outliers detected: {len(indices)}", data=indices)

    return spec, impl


def _harmonize_merge(name="harmonize_merge"):
    spec = ToolSpec(
        name=name,
        description="Merge tables of mixed frequencies onto a target frequency.",
        params=(
            ToolParam("tables", "array"),
            ToolParam("target", "string"),
        ),
        result="table",
        effect="pure",
    )

    def impl(args, ctx):
        tables = [_table(doc) for doc in args["tables"]]
        merged = datatools.harmonize_merge(tables, args["target"])
        frequencies = sorted({t.frequency for t in tables})
        text = (
            f"Unified {len(frequencies)} different data frequencies "
            f"({', '.join(frequencies)}) into {len(merged)} {args['target']} periods "
            f"x {len(merged.columns)} columns"
        )
        return ToolResult(text=text, data=merged.to_dict())

    return spec, impl


def _derive_features(name="derive_features"):
    spec = ToolSpec(
        name=name,
        description="Append growth, moving-average, and ratio columns.",
        params=(
            ToolParam("table", "object"),
            ToolParam("recipes", "array", required=False),
        ),
        result="table",
        effect="pure",
    )

    def impl(args, ctx):
        table = _table(args["table"])
        recipes = args.get("recipes")
        if recipes is None:
            recipes = [{"op": "growth-rate", "column": c} for c in table.column_names()]
            recipes += [
                {"op": "moving-average", "column": c, "window": 4}
                for c in table.column_names()
            ]
        derived = datatools.derive_features(table, recipes)
        added = len(derived.columns) - len(table.columns)
        return ToolResult(
            text=f"Created {added} derived feature column(s)", data=derived.to_dict()
        )

    return spec, impl


def _validate_table(name="validate_table"):
    spec = ToolSpec(
        name=name,
        description="Check a table against missing-data and range rules.",
        params=(
            ToolParam("table", "object"),
            ToolParam("rules", "object", required=False),
        ),
        result="report",
        effect="pure",
    )

    def impl(args, ctx):
        table = _table(args["table"])
        report = datatools.validate_table(table, args.get("rules", {}))
        status = "pass" if report["passed"] else "fail"
        return ToolResult(
            text=f"Validation {status}: {len(report['violations'])} violation(s)",
            data=report,
        )

    return spec, impl


def _preprocess_data_tool():
    spec = ToolSpec(
        name="preprocess_data_tool",
        description="Clean raw tables: impute gaps and flag outliers per column.",
        params=(ToolParam("tables", "array"),),
        result="tables",
        effect="pure",
    )

    def impl(args, ctx):
        cleaned: List[Dict[str, Any]] = []
        imputed = 0
        flagged = 0
        for doc in args["tables"]:
            table = _table(doc)
            columns = {}
            for column, values in table.columns.items():
                gaps = sum(1 for v in values if v is None)
                filled = datatools.impute_missing(values) if gaps else [
                    float(v) for v in values  # type: ignore[arg-type]
                ]
                imputed += gaps
                flagged += len(datatools.detect_outliers(filled))
                columns[column] = filled
            cleaned.append(
                SeriesTable(
                    index=list(table.index),
                    frequency=table.frequency,
                    columns=columns,
                    provenance=dict(table.provenance),
                ).to_dict()
            )
        text = (
            f"Missing values identified: {imputed}\n"
            f"Imputed {imputed} value(s) using linear interpolation\n"
            f"Outliers detected: {flagged} observation(s)"
        )
        return ToolResult(text=text, data={"tables": cleaned})

    return spec, impl


def _calibrate_model_tool():
    spec = ToolSpec(
        name="calibrate_model_tool",
        description="Estimate AR(1) parameters (mean, persistence, noise) from a series.",
        params=(ToolParam("series", "array"),),
        result="parameters",
        effect="pure",
    )

    def impl(args, ctx):
        fit = estimate_ar1(args["series"])
        text = (
            f"Calibrated on {fit['n']} observations: mean={fit['mean']:.4f}, "
            f"ar1={fit['ar1']:.4f}, noise_sd={fit['noise_sd']:.4f}"
        )
        return ToolResult(text=text, data=fit)

    return spec, impl


def _perform_sensitivity_analysis_tool():
    spec = ToolSpec(
        name="perform_sensitivity_analysis_tool",
        description="Report how the stationary spread responds to parameter bumps.",
        params=(
            ToolParam("params", "object"),
            ToolParam("step", "number", required=False),
        ),
        result="report",
        effect="pure",
    )

    def impl(args, ctx):
        report = sensitivity_analysis(args["params"], args.get("step", 0.1))
        lines = [f"Sensitivity of {report['metric']} (base {report['base']:.4f}):"]
        for row in report["rows"]:
            lines.append(
                f"- {row['param']} {row['direction']}{int(report['step'] * 100)}%: "
                f"{row['value']:.4f}"
            )
        return ToolResult(text="\n".join(lines), data=report)

    return spec, impl


def _track_transformations_tool():
    spec = ToolSpec(
        name="track_transformations_tool",
        description="Record an ordered, digestable log of applied transformations.",
        params=(ToolParam("steps", "array"),),
        result="report",
        effect="pure",
    )

    def impl(args, ctx):
        steps = args["steps"]
        lines = [f"{i + 1}. {json.dumps(step, sort_keys=True) if isinstance(step, dict) else step}"
                 for i, step in enumerate(steps)]
        fingerprint = digest({"steps": steps})
        lines.append(f"pipeline fingerprint: {fingerprint[:16]}")
        return ToolResult(
            text="\n".join(lines), data={"steps": steps, "fingerprint": fingerprint}
        )

    return spec, impl


def build_standard_registry() -> ToolRegistry:
    """Registry with the concrete tools, agent-facing aliases, stubs, and
    prompt-template tools the shipped pipelines reference."""
    registry = ToolRegistry()
    pairs: List[Tuple[ToolSpec, Any]] = [
        _arxiv_search(),
        _web_fetch(),
        _format_citations(),
        _generate_synthetic_series(),
        _impute_missing(),
        _detect_outliers(),
        _harmonize_merge(),
        _derive_features(),
        _validate_table(),
        # agent-facing names from the pipeline documents
        _format_citations("manage_citations_tool"),
        _generate_synthetic_data_tool(),
        _preprocess_data_tool(),
        _harmonize_merge("merge_data_tool"),
        _derive_features("create_derived_features_tool"),
        _validate_table("validate_data_tool"),
        _calibrate_model_tool(),
        _perform_sensitivity_analysis_tool(),
        _track_transformations_tool(),
    ]
    pairs += standard_stub_tools()
    pairs += standard_prompt_tools()
    for spec, impl in pairs:
        registry.register(spec, impl)
    return registry

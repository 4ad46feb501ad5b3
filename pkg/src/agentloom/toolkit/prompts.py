"""Prompt-template tools: steps delegated to the model behind a tool name.

Each tool renders an authored template with its arguments and issues exactly
one backend completion as the pseudo-agent ``tool:<name>``; the completion
text is the tool result.  Scripted runs address these calls with that
pseudo-agent name.
"""

from __future__ import annotations

import string
from typing import Callable, Dict, Tuple

from .registry import ToolContext, ToolParam, ToolResult, ToolSpec


class PromptToolError(RuntimeError):
    """A prompt tool could not render or reach its backend."""


def template_placeholders(template: str) -> Tuple[str, ...]:
    """Placeholder names appearing in a format template, in first-use order."""
    seen = []
    for _, field_name, _, _ in string.Formatter().parse(template):
        if field_name is None:
            continue
        if not field_name or not field_name.isidentifier():
            raise ValueError(f"template placeholders must be plain names, got {field_name!r}")
        if field_name not in seen:
            seen.append(field_name)
    return tuple(seen)


def make_prompt_tool(
    name: str,
    description: str,
    template: str,
    model: str = "primary",
) -> Tuple[ToolSpec, Callable[[Dict, ToolContext], ToolResult]]:
    """Build a (spec, implementation) pair for a template-rendered LLM step."""
    placeholders = template_placeholders(template)
    spec = ToolSpec(
        name=name,
        description=description,
        params=tuple(ToolParam(p, "string") for p in placeholders),
        result="text",
        effect="network",
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        from ..runtime import ModelRequest

        try:
            rendered = template.format(**{p: args[p] for p in placeholders})
        except KeyError as exc:
            raise PromptToolError(f"{name}: unresolved placeholder {exc}") from exc
        if ctx.backend is None:
            raise PromptToolError(f"{name}: no model backend available")
        request = ModelRequest(
            agent=f"tool:{name}",
            model=model,
            system=description or f"You are the {name} step.",
            dialogue=(("task", rendered),),
        )
        completion = ctx.backend.complete(request)
        return ToolResult(text=completion.text)

    return spec, implementation


# Authored templates for the steps the reference pipelines delegate to the
# model.  Keys are tool names; values are (description, template).
PROMPT_TOOL_TEMPLATES: Dict[str, Tuple[str, str]] = {
    # --- ideation ---------------------------------------------------------
    "human_idea_tool": (
        "Structure a human-provided research idea into scope, motivation, and open angles.",
        "A researcher proposed this idea:\n{idea}\n\n"
        "Restate it as a structured brief: core question, motivation, and "
        "three angles worth exploring.",
    ),
    "idea_enrichment_tool": (
        "Identify aspects of a research idea that need further exploration.",
        "Analyze this research idea and list the key aspects that need further "
        "exploration, each with a one-line rationale:\n{idea}",
    ),
    "ideation_tool": (
        "Generate candidate research questions from collected source material.",
        "From the following collected material, generate candidate research "
        "questions with brief motivations:\n{material}",
    ),
    "refinement_tool": (
        "Filter redundant or vague candidate questions and tighten wording.",
        "Refine this list of candidate research questions: remove redundancies, "
        "merge near-duplicates, and tighten wording.\n{ideas}",
    ),
    "contextualization_tool": (
        "Situate research questions within established economic frameworks.",
        "For each question below, add the economic context: related literature "
        "strands, frameworks, and datasets.\n{questions}",
    ),
    "finalization_tool": (
        "Prioritize research questions into a ranked final list.",
        "Produce a prioritized final list from these contextualized research "
        "questions, with a one-line justification per rank:\n{questions}",
    ),
    # --- literature -------------------------------------------------------
    "summarize_paper_tool": (
        "Distill a paper into frameworks, findings, and policy implications.",
        "Summarize the following paper content: key theoretical framework, "
        "empirical findings with significance, and policy implications.\n{paper}",
    ),
    "find_research_gaps_tool": (
        "Identify gaps and inconsistencies across summarized literature.",
        "Given these paper summaries, identify research gaps, contradictions, "
        "and under-explored questions:\n{summaries}",
    ),
    "track_research_trends_tool": (
        "Spot emerging research directions across the collected literature.",
        "From these summaries and citation patterns, describe emerging research "
        "directions and declining ones:\n{summaries}",
    ),
    "draft_review_tool": (
        "Consolidate analysis into a structured literature review report.",
        "Consolidate the following analysis into a structured literature review "
        "(themes, evidence, gaps, bibliography placeholders):\n{analysis}",
    ),
    # --- model development --------------------------------------------------
    "define_theoretical_framework_tool": (
        "Structure assumptions and approach for a theoretical framework.",
        "Define a theoretical framework for a {model_type} model focused on "
        "{focus}: agents, assumptions, frictions, and equilibrium concept.",
    ),
    "translate_to_mathematical_model_tool": (
        "Convert a theoretical framework into model equations.",
        "Translate this framework into explicit equations (objective functions, "
        "constraints, equilibrium conditions):\n{framework}",
    ),
    "generate_computational_algorithm_tool": (
        "Sketch code implementing a mathematical model.",
        "Write a computational algorithm (pseudo-code or Python sketch) that "
        "implements this model:\n{equations}",
    ),
    # --- data processing ----------------------------------------------------
    "generate_documentation_tool": (
        "Generate documentation artifacts for a processing pipeline.",
        "Generate documentation for this pipeline activity: overview, per-step "
        "notes, and a data dictionary.\n{activity}",
    ),
    # --- implementation roster ----------------------------------------------
    "write_code_tool": (
        "Translate mathematical specifications into executable code.",
        "Translate this specification into clean, runnable code with comments:\n{spec_text}",
    ),
    "debug_code_tool": (
        "Diagnose and propose fixes for failing code.",
        "Diagnose the failure below and propose a minimal fix:\n{report}",
    ),
    "log_experiments_tool": (
        "Record an experiment run with parameters and outcomes.",
        "Produce a structured log entry for this experiment (parameters, "
        "environment, outcome):\n{details}",
    ),
    "generate_tests_tool": (
        "Derive test cases for implemented model code.",
        "Derive a test plan and concrete cases for this code:\n{code}",
    ),
    "optimize_code_tool": (
        "Suggest performance improvements for model code.",
        "Identify hotspots and propose optimizations for this code:\n{code}",
    ),
    "run_batches_tool": (
        "Plan batch executions across a parameter grid.",
        "Plan batch runs over this parameter grid and summarize the schedule:\n{grid}",
    ),
    "track_versions_tool": (
        "Summarize version history of model artifacts.",
        "Summarize the change history and current version state:\n{changes}",
    ),
    # --- estimation roster ----------------------------------------------------
    "estimate_model_tool": (
        "Estimate model parameters from prepared data (narrative step).",
        "Describe the estimation of this model on the prepared data, reporting "
        "parameter estimates and fit:\n{setup}",
    ),
    "validate_estimates_tool": (
        "Check estimated parameters against theory and data moments.",
        "Validate these estimates against theoretical restrictions and data "
        "moments; flag violations:\n{estimates}",
    ),
    "run_diagnostics_tool": (
        "Run specification diagnostics on an estimated model.",
        "Run diagnostics (residual behavior, stability, specification) for:\n{estimates}",
    ),
    "test_hypotheses_tool": (
        "Formulate and evaluate hypothesis tests on estimates.",
        "Formulate and evaluate the key hypothesis tests for:\n{estimates}",
    ),
    "analyze_robustness_tool": (
        "Probe robustness of results across specifications.",
        "Assess robustness across alternative specifications and samples for:\n{results}",
    ),
    # --- reporting roster ----------------------------------------------------
    "interpret_results_tool": (
        "Interpret empirical results in economic terms.",
        "Interpret these results in economic terms (magnitudes, mechanisms, "
        "caveats):\n{results}",
    ),
    "design_visuals_tool": (
        "Propose figures and tables for the findings.",
        "Propose figures/tables that best communicate these findings, with "
        "captions:\n{results}",
    ),
    "draft_report_tool": (
        "Draft the manuscript sections from interpreted results.",
        "Draft the core manuscript sections from this material:\n{material}",
    ),
    "advise_journal_tool": (
        "Suggest target journals and framing.",
        "Suggest target journals and framing for this manuscript summary:\n{summary}",
    ),
    "proofread_tool": (
        "Proofread a draft for clarity and correctness.",
        "Proofread this draft; list corrections and improved phrasings:\n{draft}",
    ),
    "format_manuscript_tool": (
        "Apply submission formatting to a draft.",
        "Apply standard submission formatting to this draft and note changes:\n{draft}",
    ),
    "draft_response_tool": (
        "Draft a response to referee comments.",
        "Draft a point-by-point response to these referee comments:\n{comments}",
    ),
}


def standard_prompt_tools():
    """(spec, implementation) pairs for every authored template."""
    return [
        make_prompt_tool(name, description, template)
        for name, (description, template) in PROMPT_TOOL_TEMPLATES.items()
    ]

"""Fixture-backed stub tools for sources that need credentials or scraping.

Each stub serves bundled fixture data when the run is in fixtures mode,
or forwards to a configurable extraction endpoint (``AGENTLOOM_SCRAPER_URL``,
optional ``AGENTLOOM_SCRAPER_KEY``) when one is configured.  With neither, the
tool refuses with guidance instead of silently inventing data.
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from importlib import resources
from typing import Any, Callable, Dict, List, Optional, Tuple

from .datatools import generate_synthetic_series
from .registry import ToolContext, ToolParam, ToolResult, ToolSpec
from .research import arxiv_search, web_fetch

logger = logging.getLogger(__name__)

SCRAPER_URL_VAR = "AGENTLOOM_SCRAPER_URL"
SCRAPER_KEY_VAR = "AGENTLOOM_SCRAPER_KEY"


class StubUnavailableError(RuntimeError):
    """Neither fixtures mode nor a remote endpoint is available."""


def load_fixture(name: str) -> Any:
    path = resources.files("agentloom.toolkit").joinpath("fixtures", f"{name}.json")
    return json.loads(path.read_text(encoding="utf-8"))


def _config(ctx: ToolContext, key: str) -> str:
    return ctx.config.get(key) or os.environ.get(key, "")


def _tokens(text: str) -> set:
    return {t for t in "".join(c.lower() if c.isalnum() else " " for c in text).split() if t}


def _match(records: List[Dict[str, Any]], query: str, keys: Tuple[str, ...]) -> List[Dict[str, Any]]:
    """Records overlapping the query by at least one token, best matches first.

    Empty queries match everything.  Ordering is stable: score descending,
    original position as the tiebreak.
    """
    wanted = _tokens(query)
    if not wanted:
        return list(records)
    scored = []
    for pos, record in enumerate(records):
        text = " ".join(str(record.get(k, "")) for k in keys)
        score = len(wanted & _tokens(text))
        if score:
            scored.append((-score, pos, record))
    return [record for _, _, record in sorted(scored, key=lambda t: t[:2])]


def _remote(ctx: ToolContext, tool: str, args: Dict[str, Any]) -> ToolResult:
    import httpx

    url = _config(ctx, SCRAPER_URL_VAR).rstrip("/")
    headers = {}
    key = _config(ctx, SCRAPER_KEY_VAR)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    client = ctx.http or httpx.Client(timeout=60.0)
    response = client.post(f"{url}/extract", json={"tool": tool, "args": args}, headers=headers)
    if response.status_code != 200:
        raise StubUnavailableError(
            f"{tool}: extraction endpoint returned status {response.status_code}"
        )
    payload = response.json()
    records = payload.get("records", [])
    return ToolResult(text=_render_records(tool, records), data=records)


def _render_records(label: str, records: List[Dict[str, Any]]) -> str:
    lines = [f"{label}: {len(records)} record(s)"]
    for record in records:
        title = record.get("title") or record.get("topic") or record.get("name") or "?"
        extras = [
            str(record[k])
            for k in ("institution", "venue", "year", "source", "frequency")
            if k in record
        ]
        lines.append(f"- {title}" + (f" ({', '.join(extras)})" if extras else ""))
    return "\n".join(lines)


def _search_stub(
    name: str,
    description: str,
    fixture: str,
    keys: Tuple[str, ...],
    query_param: str = "query",
    query_required: bool = True,
) -> Tuple[ToolSpec, Callable[[Dict, ToolContext], ToolResult]]:
    spec = ToolSpec(
        name=name,
        description=description,
        params=(
            ToolParam(query_param, "string", required=query_required),
            ToolParam("max_results", "integer", required=False),
        ),
        result="records",
        effect="network",
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        query = args.get(query_param, "")
        limit = args.get("max_results")
        if ctx.fixtures:
            records = _match(load_fixture(fixture), query, keys)
            if limit is not None:
                records = records[: max(limit, 0)]
            return ToolResult(text=_render_records(name, records), data=records)
        if _config(ctx, SCRAPER_URL_VAR):
            return _remote(ctx, name, args)
        raise StubUnavailableError(
            f"{name} needs --fixtures mode or {SCRAPER_URL_VAR} to be configured"
        )

    return spec, implementation


def firecrawl_trending_tool():
    return _search_stub(
        "firecrawl_trending_tool",
        "Extract trending topics from news and discussion sources.",
        "trending",
        ("topic", "source"),
        query_param="topic",
        query_required=False,
    )


def firecrawl_grey_tool():
    return _search_stub(
        "firecrawl_grey_tool",
        "Retrieve grey literature from policy institution websites.",
        "grey",
        ("title", "institution", "kind"),
        query_param="topic",
        query_required=False,
    )


def google_search_tool():
    return _search_stub(
        "google_search_tool",
        "Query the web for relevant resources.",
        "web_search",
        ("title", "snippet"),
    )


def scholar_search_tool():
    return _search_stub(
        "scholar_search_tool",
        "Run advanced queries across subscription research databases.",
        "scholar",
        ("title", "venue", "tags"),
    )


def academic_literature_tool():
    return _search_stub(
        "academic_literature_tool",
        "Search academic repositories for relevant studies.",
        "academic",
        ("title", "venue"),
    )


def search_economic_theories_tool():
    return _search_stub(
        "search_economic_theories_tool",
        "Retrieve candidate theoretical frameworks with descriptions.",
        "theories",
        ("name", "description", "tags"),
    )


def search_economic_indicators_tool():
    spec = ToolSpec(
        name="search_economic_indicators_tool",
        description="Look up economic indicators matching a query.",
        params=(ToolParam("query", "string"),),
        result="records",
        effect="network",
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        if not ctx.fixtures and not _config(ctx, SCRAPER_URL_VAR):
            raise StubUnavailableError(
                f"search_economic_indicators_tool needs --fixtures mode or {SCRAPER_URL_VAR}"
            )
        catalog = load_fixture("indicators")["catalog"]
        records = _match(catalog, args["query"], ("name", "description", "source"))
        return ToolResult(
            text=_render_records("search_economic_indicators_tool", records), data=records
        )

    return spec, implementation


def _split_indicators(raw: str) -> List[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def expand_indicator_list_tool():
    spec = ToolSpec(
        name="expand_indicator_list_tool",
        description="Expand an initial indicator set with related series.",
        params=(ToolParam("indicators", "string"),),
        result="records",
        effect="pure",
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        related_map = load_fixture("indicators")["related"]
        base = _split_indicators(args["indicators"])
        expanded = list(base)
        for name in base:
            for related in related_map.get(name, []):
                if related not in expanded:
                    expanded.append(related)
        added = [n for n in expanded if n not in base]
        text = (
            f"Initial indicators: {', '.join(base)}\n"
            f"Discovered related indicators: {', '.join(added) if added else '(none)'}\n"
            f"Final indicator set: {len(expanded)} economic indicators selected"
        )
        return ToolResult(text=text, data=expanded)

    return spec, implementation


def arxiv_search_tool():
    spec = ToolSpec(
        name="arxiv_search_tool",
        description="Search arXiv for papers matching a query.",
        params=(
            ToolParam("query", "string"),
            ToolParam("max_results", "integer", required=False),
        ),
        result="records",
        effect="network",
        timeout=30.0,
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        limit = args.get("max_results", 10)
        if ctx.fixtures:
            records = _match(load_fixture("arxiv"), args["query"], ("title", "abstract"))
            records = records[: max(limit, 0)]
        else:
            records = arxiv_search(args["query"], limit, client=ctx.http)
        return ToolResult(text=_render_records("arxiv_search_tool", records), data=records)

    return spec, implementation


FIXTURE_PAPER_MARKDOWN = """# State-Dependent Fiscal Multipliers in Emerging Economies

## Research Question
How do government spending multipliers vary with the state of the business
cycle in emerging economies?

## Methodology
Regime-switching local projections on a quarterly panel, with identification
from forecast errors of government consumption.

## Findings
Multipliers are roughly twice as large in downturns; openness and exchange
rate regimes explain most cross-country variation.
"""


def decompose_paper_tool():
    spec = ToolSpec(
        name="decompose_paper_tool",
        description="Fetch a paper page and convert it into structured markdown.",
        params=(ToolParam("url", "string"),),
        result="document",
        effect="network",
        timeout=60.0,
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        if ctx.fixtures:
            body = FIXTURE_PAPER_MARKDOWN + f"\n(Source: {args['url']})\n"
            return ToolResult(text=body, data={"url": args["url"], "markdown": body})
        doc = web_fetch(args["url"], client=ctx.http)
        return ToolResult(text=doc["markdown"], data=doc)

    return spec, implementation


def _indicator_seed(dataset: str, indicator: str, run_seed: Optional[int]) -> int:
    return zlib.crc32(f"{dataset}:{indicator}:{run_seed or 0}".encode("utf-8"))


def retrieve_data_tool():
    spec = ToolSpec(
        name="retrieve_data_tool",
        description="Retrieve indicator series for a dataset from data sources.",
        params=(
            ToolParam("dataset", "string"),
            ToolParam("indicators", "string"),
            ToolParam("periods", "integer", required=False),
        ),
        result="tables",
        effect="network",
        timeout=120.0,
    )

    def implementation(args: Dict, ctx: ToolContext) -> ToolResult:
        if not ctx.fixtures and not _config(ctx, SCRAPER_URL_VAR):
            raise StubUnavailableError(
                f"retrieve_data_tool needs --fixtures mode or {SCRAPER_URL_VAR}; "
                "live source APIs require credentials"
            )
        if not ctx.fixtures:
            return _remote(ctx, "retrieve_data_tool", args)
        quarters = args.get("periods", 56)
        if quarters < 1:
            raise ValueError("periods must be positive")
        frequency_of = {
            rec["name"]: rec["frequency"] for rec in load_fixture("indicators")["catalog"]
        }
        lengths = {
            "monthly": quarters * 3,
            "quarterly": quarters,
            "annual": max(quarters // 4, 1),
        }
        tables = []
        for indicator in _split_indicators(args["indicators"]):
            seed = _indicator_seed(args["dataset"], indicator, ctx.seed)
            frequency = frequency_of.get(indicator, "quarterly")
            length = lengths[frequency]
            table = generate_synthetic_series(
                length=length,
                mean=50.0 + (seed % 100) / 2.0,
                ar1=0.3 + (seed % 60) / 100.0,
                noise_sd=1.0 + (seed % 5),
                seed=seed,
                frequency=frequency,
                start_year=2010,
                column=indicator,
            )
            table.provenance[indicator] = args["dataset"]
            if length >= 8:  # knock out a couple of interior points to clean later
                values = table.columns[indicator]
                values[2 + seed % (length - 4)] = None
                values[2 + (seed // 7) % (length - 4)] = None
            tables.append(table)
        total = sum(len(t) for t in tables)
        text = (
            f"Retrieved {len(tables)} series ({total} observations) "
            f"for dataset {args['dataset']!r}"
        )
        return ToolResult(text=text, data={"tables": [t.to_dict() for t in tables]})

    return spec, implementation


def standard_stub_tools():
    """All (spec, implementation) stub pairs, in registration order."""
    return [
        firecrawl_trending_tool(),
        firecrawl_grey_tool(),
        google_search_tool(),
        scholar_search_tool(),
        academic_literature_tool(),
        search_economic_theories_tool(),
        search_economic_indicators_tool(),
        expand_indicator_list_tool(),
        arxiv_search_tool(),
        decompose_paper_tool(),
        retrieve_data_tool(),
    ]

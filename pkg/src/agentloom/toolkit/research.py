"""Literature tools: arXiv search, web fetching with markdown conversion,
and citation formatting."""

from __future__ import annotations

import logging
import re
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Any, Dict, List, Optional, Tuple
from urllib.parse import urlencode, urlparse

import httpx

logger = logging.getLogger(__name__)

ARXIV_BASE_URL = "https://export.arxiv.org/api/query"
DEFAULT_TIMEOUT = 30.0
MAX_RETRIES = 3
BACKOFF_BASE = 0.5

ATOM_NS = {"atom": "http://www.w3.org/2005/Atom"}


class ResearchToolError(RuntimeError):
    pass


def _get_with_retries(
    url: str,
    *,
    http: Optional[httpx.Client] = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> httpx.Response:
    client = http or httpx.Client(timeout=timeout, follow_redirects=True)
    owns_client = http is None
    try:
        last_error: Optional[Exception] = None
        for attempt in range(MAX_RETRIES):
            try:
                response = client.get(url)
                if response.status_code in (429, 500, 502, 503, 504):
                    last_error = ResearchToolError(f"HTTP {response.status_code} from {url}")
                else:
                    return response
            except httpx.HTTPError as exc:
                last_error = exc
            if attempt + 1 < MAX_RETRIES:
                time.sleep(min(BACKOFF_BASE * 2**attempt, 8.0))
        raise ResearchToolError(f"request failed after {MAX_RETRIES} attempts: {last_error}")
    finally:
        if owns_client:
            client.close()


# ------------------------------------------------------------------- arXiv --

def parse_arxiv_feed(xml_text: str) -> List[Dict[str, Any]]:
    """Extract entries from an arXiv Atom feed document."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise ResearchToolError(f"arXiv response is not parseable XML: {exc}") from exc
    results = []
    for entry in root.findall("atom:entry", ATOM_NS):
        def text(tag: str) -> str:
            node = entry.find(f"atom:{tag}", ATOM_NS)
            return (node.text or "").strip() if node is not None else ""

        authors = [
            (a.findtext("atom:name", default="", namespaces=ATOM_NS) or "").strip()
            for a in entry.findall("atom:author", ATOM_NS)
        ]
        link = ""
        for node in entry.findall("atom:link", ATOM_NS):
            if node.get("type") == "text/html" or not link:
                link = node.get("href", "")
        results.append(
            {
                "id": text("id"),
                "title": re.sub(r"\s+", " ", text("title")),
                "summary": text("summary"),
                "authors": [a for a in authors if a],
                "published": text("published"),
                "link": link,
            }
        )
    return results


def arxiv_search(
    query: str,
    max_results: int = 10,
    *,
    http: Optional[httpx.Client] = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> List[Dict[str, Any]]:
    """Search arXiv's public Atom API.

    A zero budget returns immediately without touching the network; an empty
    query is an error.
    """
    if not query.strip():
        raise ResearchToolError("arxiv_search requires a non-empty query")
    if max_results < 0:
        raise ResearchToolError("max_results must be >= 0")
    if max_results == 0:
        return []
    params = urlencode({"search_query": query, "start": 0, "max_results": max_results})
    response = _get_with_retries(f"{ARXIV_BASE_URL}?{params}", http=http, timeout=timeout)
    if response.status_code != 200:
        raise ResearchToolError(f"arXiv query failed with HTTP {response.status_code}")
    entries = parse_arxiv_feed(response.text)
    logger.debug("arxiv_search(%r) -> %d entr(ies)", query, len(entries))
    return entries[:max_results]


# --------------------------------------------------------------- web fetch --

_BLOCK_TAGS = {"p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "pre", "blockquote", "div", "tr"}
_SKIP_TAGS = {"script", "style", "head", "noscript"}


class _MarkdownExtractor(HTMLParser):
    """Small HTML-to-markdown converter covering common article structure."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.blocks: List[str] = []
        self._buf: List[str] = []
        self._skip_depth = 0
        self._list_stack: List[str] = []
        self._ordinals: List[int] = []
        self._href: Optional[str] = None
        self._pre = False
        self.title = ""
        self._in_title = False

    def _flush(self) -> None:
        text = "".join(self._buf)
        if not self._pre:
            text = re.sub(r"[ \t]+", " ", text).strip()
        if text:
            self.blocks.append(text)
        self._buf = []

    def handle_starttag(self, tag: str, attrs) -> None:
        if tag == "title":
            self._in_title = True
            return
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag in ("h1", "h2", "h3", "h4", "h5", "h6"):
            self._flush()
            self._buf.append("#" * int(tag[1]) + " ")
        elif tag == "p":
            self._flush()
        elif tag == "br":
            self._buf.append("\n")
        elif tag == "hr":
            self._flush()
            self.blocks.append("---")
        elif tag in ("ul", "ol"):
            self._flush()
            self._list_stack.append(tag)
            self._ordinals.append(0)
        elif tag == "li":
            self._flush()
            indent = "  " * (len(self._list_stack) - 1)
            if self._list_stack and self._list_stack[-1] == "ol":
                self._ordinals[-1] += 1
                self._buf.append(f"{indent}{self._ordinals[-1]}. ")
            else:
                self._buf.append(f"{indent}- ")
        elif tag == "pre":
            self._flush()
            self._pre = True
            self._buf.append("```\n")
        elif tag == "code" and not self._pre:
            self._buf.append("`")
        elif tag == "blockquote":
            self._flush()
            self._buf.append("> ")
        elif tag in ("strong", "b"):
            self._buf.append("**")
        elif tag in ("em", "i"):
            self._buf.append("*")
        elif tag == "a":
            self._href = dict(attrs).get("href")
            self._buf.append("[")

    def handle_endtag(self, tag: str) -> None:
        if tag == "title":
            self._in_title = False
            return
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in ("h1", "h2", "h3", "h4", "h5", "h6", "p", "li", "blockquote", "tr"):
            self._flush()
        elif tag in ("ul", "ol"):
            self._flush()
            if self._list_stack:
                self._list_stack.pop()
                self._ordinals.pop()
        elif tag == "pre":
            self._buf.append("\n```")
            self._pre = False
            self._flush()
        elif tag == "code" and not self._pre:
            self._buf.append("`")
        elif tag in ("strong", "b"):
            self._buf.append("**")
        elif tag in ("em", "i"):
            self._buf.append("*")
        elif tag == "a":
            if self._href:
                self._buf.append(f"]({self._href})")
            else:
                self._buf.append("]")
            self._href = None

    def handle_data(self, data: str) -> None:
        if self._in_title:
            self.title += data.strip()
            return
        if self._skip_depth:
            return
        self._buf.append(data)

    def result(self) -> str:
        self._flush()
        return "\n\n".join(self.blocks).strip()


def html_to_markdown(html: str) -> str:
    """Convert an HTML fragment or page to markdown text."""
    extractor = _MarkdownExtractor()
    extractor.feed(html)
    return extractor.result()


def extract_title(html: str) -> str:
    extractor = _MarkdownExtractor()
    extractor.feed(html)
    if extractor.title:
        return extractor.title
    for block in extractor.blocks:
        match = re.match(r"#+ (.+)", block)
        if match:
            return match.group(1).strip()
    return ""


def web_fetch(
    url: str,
    *,
    http: Optional[httpx.Client] = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> Dict[str, str]:
    """Fetch a page and return ``{"title", "markdown", "url"}``."""
    scheme = urlparse(url).scheme
    if scheme not in ("http", "https"):
        raise ResearchToolError(f"unsupported URL scheme: {scheme!r}")
    response = _get_with_retries(url, http=http, timeout=timeout)
    if response.status_code != 200:
        raise ResearchToolError(f"fetch of {url} failed with HTTP {response.status_code}")
    html = response.text
    return {"title": extract_title(html), "markdown": html_to_markdown(html), "url": url}


# --------------------------------------------------------------- citations --

@dataclass(frozen=True)
class CitationEntry:
    key: str
    authors: Tuple[str, ...]
    year: int
    title: str
    venue: str = ""
    doi: Optional[str] = None

    def __post_init__(self) -> None:
        if not 1500 <= self.year <= 2100:
            raise ValueError(f"implausible year: {self.year}")
        if not self.authors:
            raise ValueError("citation needs at least one author")

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "key": self.key,
            "authors": list(self.authors),
            "year": self.year,
            "title": self.title,
            "venue": self.venue,
        }
        if self.doi:
            doc["doi"] = self.doi
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "CitationEntry":
        return cls(
            key=doc["key"],
            authors=tuple(doc["authors"]),
            year=int(doc["year"]),
            title=doc["title"],
            venue=doc.get("venue", ""),
            doi=doc.get("doi"),
        )


def format_citations(
    entries: List[CitationEntry], style: str = "author-year"
) -> Tuple[str, List[Dict[str, Any]]]:
    """Render a deduplicated author-year bibliography.

    Entries sharing (title, year) collapse to one line; the second return
    value reports what was dropped.  Lines sort by (first author, year).
    """
    if style != "author-year":
        raise ValueError(f"unknown citation style: {style!r}")
    seen: Dict[Tuple[str, int], CitationEntry] = {}
    dropped: List[Dict[str, Any]] = []
    for entry in entries:
        fingerprint = (entry.title.strip().lower(), entry.year)
        if fingerprint in seen:
            dropped.append(
                {
                    "key": entry.key,
                    "duplicate_of": seen[fingerprint].key,
                    "title": entry.title,
                    "year": entry.year,
                }
            )
        else:
            seen[fingerprint] = entry
    ordered = sorted(seen.values(), key=lambda e: (e.authors[0], e.year, e.title))
    lines = []
    for e in ordered:
        authors = " & ".join(e.authors)
        line = f"{authors} ({e.year}). {e.title}."
        if e.venue:
            line += f" {e.venue}."
        if e.doi:
            line += f" https://doi.org/{e.doi}"
        lines.append(line)
    return "\n".join(lines), dropped

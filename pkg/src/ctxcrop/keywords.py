"""Keyword extraction: prompt rendering, reply parsing, and the offline
lexicon fallback.

The extractor turns a context window into at most ``max_keywords`` short
grounding phrases.  The happy path renders a prompt from a versioned
template and asks a text-generation backend; when the backend is down or
returns nothing parseable, an optional lexicon matcher scans the window
text directly so batch runs degrade instead of aborting.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Sequence

from .backends import BackendError, TextGenBackend
from .context import ContextWindow

log = logging.getLogger(__name__)

PROMPT_TEMPLATE_VERSION = "v1"

DEFAULT_MAX_KEYWORDS = 5

# Characters stripped from keyword edges, besides whitespace.
_QUOTE_CHARS = "\"'`“”‘’«»「」『』"

_SPLIT_RE = re.compile(r"[,\n，]")


def _load_asset(name: str) -> str:
    return resources.files("ctxcrop").joinpath("assets", name).read_text(
        encoding="utf-8")


def default_prompt_template() -> str:
    return _load_asset(f"keyword_prompt_{PROMPT_TEMPLATE_VERSION}.txt")


def load_lexicon(path: Optional[str] = None) -> list[str]:
    """Lexicon terms, one per line; comments and blanks dropped."""
    text = Path(path).read_text(encoding="utf-8") if path else _load_asset(
        "lexicon_en.txt")
    terms = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.append(line)
    return terms


@dataclass(frozen=True)
class PromptText:
    """A rendered prompt, carrying the template version for provenance."""

    body: str
    template_version: str = PROMPT_TEMPLATE_VERSION


@dataclass(frozen=True)
class KeywordList:
    """Up to ``max_keywords`` grounding phrases, in extraction order."""

    keywords: tuple[str, ...] = ()
    source: Literal["backend", "fallback"] = "backend"

    def __bool__(self) -> bool:
        return bool(self.keywords)

    def __len__(self) -> int:
        return len(self.keywords)


def render_prompt(window: ContextWindow, *,
                  max_keywords: int = DEFAULT_MAX_KEYWORDS,
                  target_language: str = "English",
                  template: Optional[str] = None) -> PromptText:
    """Instantiate the extraction prompt over *window*.

    Window entries appear verbatim, oldest first, one per line as
    ``role: "text"``.  An empty window renders an empty conversation block.
    """
    if template is None:
        template = default_prompt_template()
    conversation = "\n".join(
        f'{role}: "{text}"' for role, text in window.entries)
    body = (template
            .replace("{{max_keywords}}", str(max_keywords))
            .replace("{{target_language}}", target_language)
            .replace("{{conversation}}", conversation))
    return PromptText(body=body)


def parse_keywords(raw: str, max_keywords: int = DEFAULT_MAX_KEYWORDS,
                   *, source: Literal["backend", "fallback"] = "backend"
                   ) -> KeywordList:
    """Split a backend reply into a clean, capped keyword list.

    Splits on commas and newlines, strips surrounding whitespace and quote
    characters, drops empties, dedupes case-insensitively keeping the first
    occurrence, and truncates to *max_keywords* in order of appearance.
    """
    kept: list[str] = []
    seen: set[str] = set()
    for piece in _SPLIT_RE.split(raw):
        word = piece.strip().strip(_QUOTE_CHARS + " \t").strip()
        if not word:
            continue
        folded = word.casefold()
        if folded in seen:
            continue
        seen.add(folded)
        kept.append(word)
        if len(kept) == max_keywords:
            break
    return KeywordList(keywords=tuple(kept), source=source)


class LexiconExtractor:
    """Offline fallback: longest-match lexicon lookup over window text.

    Matches are word-bounded and case-insensitive; a shorter term buried
    inside an already-claimed longer match does not count.  Results come
    back as the text actually found in the window, ordered by last
    occurrence with the most recent mention first.
    """

    def __init__(self, terms: Optional[Sequence[str]] = None):
        self.terms = list(terms) if terms is not None else load_lexicon()
        # Longest first so e.g. "inner thigh" claims its span before "thigh".
        self._ordered = sorted(self.terms, key=len, reverse=True)

    def extract(self, window: ContextWindow,
                max_keywords: int = DEFAULT_MAX_KEYWORDS) -> KeywordList:
        haystack = "\n".join(window.texts)
        claimed: list[tuple[int, int]] = []
        found: list[tuple[int, str]] = []  # (last position, matched text)
        for term in self._ordered:
            pattern = re.compile(rf"\b{re.escape(term)}\b", re.IGNORECASE)
            last = None
            for m in pattern.finditer(haystack):
                span = m.span()
                if any(s < span[1] and span[0] < e for s, e in claimed):
                    continue
                claimed.append(span)
                last = (m.start(), m.group(0))
            if last is not None:
                found.append(last)
        found.sort(key=lambda pair: pair[0], reverse=True)
        joined = ", ".join(text for _, text in found)
        return parse_keywords(joined, max_keywords, source="fallback")


def extract_keywords(window: ContextWindow, backend: TextGenBackend, *,
                     max_keywords: int = DEFAULT_MAX_KEYWORDS,
                     target_language: str = "English",
                     template: Optional[str] = None,
                     fallback: Optional[LexiconExtractor] = None
                     ) -> KeywordList:
    """Extract grounding keywords for *window* via *backend*.

    An empty window short-circuits to an empty list without touching the
    backend.  Backend failure (the client has already retried) or an
    unparseable reply falls back to the lexicon extractor when one is
    given, otherwise to an empty fallback-sourced list.
    """
    if not window:
        return KeywordList(keywords=(), source="fallback")
    prompt = render_prompt(window, max_keywords=max_keywords,
                           target_language=target_language, template=template)
    try:
        reply = backend.complete(prompt.body)
    except BackendError as exc:
        log.warning("keyword backend failed for image %s: %s",
                    window.image_id, exc)
        reply = None
    if reply is not None:
        parsed = parse_keywords(reply, max_keywords, source="backend")
        if parsed:
            return parsed
        log.warning("keyword backend reply for image %s had no parseable "
                    "keywords", window.image_id)
    if fallback is not None:
        return fallback.extract(window, max_keywords)
    return KeywordList(keywords=(), source="fallback")

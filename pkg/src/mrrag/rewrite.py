"""Query rewriting: release extraction and standalone query forms.

A conversational query is rewritten into up to three standalone queries:
Base resolves pronouns and references against the history, Filtered drops
stop words and filler terms, and Versionless additionally removes the
extracted release tokens (produced only when a release was found). The
release itself is extracted by the model, constrained to the registered
canonical forms.

The rewrite prompts are model-driven. For offline scripted runs, a rule
may answer with the ``STATIC_FALLBACK_SENTINEL`` token, which makes this
module compute the corresponding deterministic local form instead (Base:
the query verbatim; Filtered: static stop-word removal; Versionless:
release-token removal).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from mrrag.backend import ChatBackend, ChatMessage, ChatRequest
from mrrag.corpus.releases import ReleaseId
from mrrag.prompts import render_prompt

logger = logging.getLogger(__name__)

RELEASE_NONE_SENTINEL = "NONE"
STATIC_FALLBACK_SENTINEL = "[static-filter]"

# Turns of history included in rewrite prompts.
PROMPT_TURN_LIMIT = 10
DEFAULT_HISTORY_MAX_TURNS = 50

# Surface forms that count as release mentions: "Release 17.20", "Rel. 12",
# "R17.2". Used to locate the mentioned span, not to interpret it.
RELEASE_TOKEN_RE = re.compile(r"\b(?:release|rel|r)\.?\s*\d+(?:\.\d+)*", re.IGNORECASE)

STOP_WORDS = frozenset(
    """
    a an the is are was were be been being am do does did doing have has had
    how what which when where who whom why whether i you he she it its we
    they me him her us them my your his their our this that these those
    there here to of in on at for with from by as and or nor not no yes can
    could should would will shall may might must about into over under
    again further then once during before after above below between out off
    up down s t don use uses used using please tell show
    """.split()
)


@dataclass(frozen=True)
class ExtractedRelease:
    found: bool
    canonical: str | None = None
    matched_text: str | None = None

    def __post_init__(self) -> None:
        if not self.found and self.canonical is not None:
            raise ValueError("canonical must be absent when no release was found")
        if self.found and not self.canonical:
            raise ValueError("a found release needs its canonical form")


@dataclass(frozen=True)
class StandaloneQueries:
    base: str
    filtered: str
    versionless: str | None = None

    def __post_init__(self) -> None:
        if not self.base.strip() or not self.filtered.strip():
            raise ValueError("base and filtered queries must be non-empty")

    def as_list(self) -> list[tuple[str, str]]:
        queries = [("base", self.base), ("filtered", self.filtered)]
        if self.versionless is not None:
            queries.append(("versionless", self.versionless))
        return queries


@dataclass
class ConversationHistory:
    """Alternating user/assistant turns, oldest evicted beyond the cap."""

    max_turns: int = DEFAULT_HISTORY_MAX_TURNS
    turns: list[tuple[str, str]] = field(default_factory=list)

    def add(self, role: str, text: str) -> None:
        if role not in ("user", "assistant"):
            raise ValueError(f"unknown history role {role!r}")
        self.turns.append((role, text))
        while len(self.turns) > self.max_turns:
            self.turns.pop(0)

    def __len__(self) -> int:
        return len(self.turns)

    def render(self, limit: int = PROMPT_TURN_LIMIT) -> str:
        recent = self.turns[-limit:] if limit else self.turns
        if not recent:
            return "(empty)"
        return "\n".join(f"{role}: {text}" for role, text in recent)


def _chat(backend: ChatBackend, prompt: str, tag: str) -> str:
    request = ChatRequest(messages=[ChatMessage("user", prompt)], tag=tag)
    return backend.chat(request).strip()


def extract_release(
    query: str, known_releases: list[ReleaseId], backend: ChatBackend
) -> ExtractedRelease:
    """Ask the model which registered release the query refers to.

    The model maps surface variants onto the registered canonical forms
    and answers NONE otherwise. ``matched_text`` carries the release-like
    span found in the query itself, which stays set even when the mention
    maps to no registered release — the answer path uses it to report an
    unknown release instead of silently serving another corpus.
    """
    span = RELEASE_TOKEN_RE.search(query)
    matched_text = span.group(0) if span else None
    if not known_releases:
        return ExtractedRelease(found=False, matched_text=matched_text)
    prompt = render_prompt(
        "release_extract",
        query=query,
        known_releases=", ".join(r.canonical for r in known_releases),
    )
    response = _chat(backend, prompt, "release_extract")
    if response.upper() == RELEASE_NONE_SENTINEL:
        return ExtractedRelease(found=False, matched_text=matched_text)
    by_canonical = {r.canonical.lower(): r for r in known_releases}
    hit = by_canonical.get(response.lower())
    if hit is None:
        logger.warning("model named unregistered release %r; treating as not found", response)
        return ExtractedRelease(found=False, matched_text=matched_text)
    return ExtractedRelease(found=True, canonical=hit.canonical, matched_text=matched_text)


def static_filter(text: str) -> str:
    """Deterministic stop-word removal, keeping content and release tokens."""
    kept = []
    for token in text.split():
        stripped = token.strip(".,;:!?\"'()[]")
        if not stripped:
            continue
        if stripped.lower() in STOP_WORDS:
            continue
        kept.append(stripped)
    return " ".join(kept)


def strip_release_tokens(text: str, release: ExtractedRelease) -> str:
    """Remove every mention of the extracted release from ``text``."""
    result = text
    mentions = [m for m in (release.canonical, release.matched_text) if m]
    for mention in mentions:
        result = re.sub(re.escape(mention), " ", result, flags=re.IGNORECASE)
    return re.sub(r"\s+", " ", result).strip()


def _purify_versionless(candidate: str, release: ExtractedRelease) -> str:
    """Enforce that no token of the extracted release survives."""
    lowered = candidate.lower()
    for mention in (release.canonical, release.matched_text):
        if mention and mention.lower() in lowered:
            logger.warning("versionless query still mentioned %r; stripping", mention)
            return strip_release_tokens(candidate, release)
    return candidate


def rewrite_queries(
    query: str,
    history: ConversationHistory,
    release: ExtractedRelease,
    backend: ChatBackend,
) -> StandaloneQueries:
    """Produce the standalone query forms for one user query."""
    rendered_history = history.render()

    base_response = _chat(
        backend,
        render_prompt("base", query=query, history=rendered_history),
        "rewrite_base",
    )
    base = query if base_response == STATIC_FALLBACK_SENTINEL else base_response

    filtered_response = _chat(
        backend,
        render_prompt("filtered", query=query, history=rendered_history),
        "rewrite_filtered",
    )
    filtered = (
        static_filter(base) if filtered_response == STATIC_FALLBACK_SENTINEL else filtered_response
    )
    if not filtered.strip():
        logger.warning("filtered query came back empty; falling back to base")
        filtered = base

    versionless: str | None = None
    if release.found:
        versionless_response = _chat(
            backend,
            render_prompt(
                "versionless",
                query=query,
                history=rendered_history,
                release=release.canonical or "",
            ),
            "rewrite_versionless",
        )
        if versionless_response == STATIC_FALLBACK_SENTINEL:
            versionless = strip_release_tokens(filtered, release)
        else:
            versionless = _purify_versionless(versionless_response, release)

    return StandaloneQueries(base=base, filtered=filtered, versionless=versionless)

"""The answering pipeline: rewrite, retrieve, reduce, select, generate.

``answer`` runs one user query end to end against the corpus of the
resolved release and returns an :class:`Answer` carrying the text, the
chunks it was generated from, per-step wall-clock timings, and the
standalone queries used for retrieval. Every intermediate step can be
switched off independently for ablation runs; ``baseline_mode`` marks the
conventional single-chunk configuration (which forbids dual chunking and
context reduction).

Step timings are measured as consecutive segments, so they sum to the
total by construction and cover exactly the executed steps.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field

from mrrag.backend import BackendError, ChatBackend, ChatMessage, ChatRequest
from mrrag.corpus.chunking import ContextChunk, SearchChunk
from mrrag.corpus.preprocess import DocumentPage
from mrrag.corpus.releases import UnknownReleaseError, parse_release
from mrrag.prompts import render_prompt
from mrrag.retrieval import RetrievalConfig, retrieve
from mrrag.rewrite import (
    ConversationHistory,
    ExtractedRelease,
    StandaloneQueries,
    extract_release,
    rewrite_queries,
)

logger = logging.getLogger(__name__)

DEFAULT_TOP_M = 3
DEFAULT_ABSTENTION_PHRASE = "I don't know"
DEFAULT_BASELINE_CHUNK_CAP = 3000
DEFAULT_BASELINE_OVERLAP = 0.25

REDUCE_EMPTY_SENTINEL = "EMPTY"

STEP_REWRITE = "rewrite"
STEP_RETRIEVE = "retrieve"
STEP_REDUCE = "reduce"
STEP_SELECT = "select"
STEP_GENERATE = "generate"


class PipelineError(Exception):
    """A pipeline step failed for good."""

    def __init__(self, message: str, step: str):
        super().__init__(message)
        self.step = step


@dataclass
class PipelineConfig:
    k: int = 2
    ps: int = 500
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    top_m: int = DEFAULT_TOP_M
    enable_rewrite: bool = True
    enable_dual_chunk: bool = True
    enable_reduce: bool = True
    enable_select: bool = True
    baseline_mode: bool = False
    baseline_chunk_cap: int = DEFAULT_BASELINE_CHUNK_CAP
    baseline_overlap: float = DEFAULT_BASELINE_OVERLAP
    abstention_phrase: str = DEFAULT_ABSTENTION_PHRASE

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.ps < 0:
            raise ValueError("ps must be >= 0")
        if self.top_m < 1:
            raise ValueError("top_m must be >= 1")
        if self.baseline_chunk_cap < 1:
            raise ValueError("baseline_chunk_cap must be >= 1")
        if not 0.0 <= self.baseline_overlap < 0.5:
            raise ValueError("baseline_overlap must lie in [0, 0.5)")
        if self.baseline_mode and (self.enable_dual_chunk or self.enable_reduce):
            raise ValueError("baseline_mode excludes dual chunking and reduction")

    def flags(self) -> dict[str, bool]:
        return {
            "enable_rewrite": self.enable_rewrite,
            "enable_dual_chunk": self.enable_dual_chunk,
            "enable_reduce": self.enable_reduce,
            "enable_select": self.enable_select,
            "baseline_mode": self.baseline_mode,
        }


@dataclass(frozen=True)
class ReducedChunk:
    context_chunk_id: str
    text: str
    empty: bool

    def __post_init__(self) -> None:
        if self.empty != (not self.text.strip()):
            raise ValueError("empty flag must mirror blank text")


@dataclass
class ChatSession:
    """What the pipeline needs from a conversation: history and a pin."""

    history: ConversationHistory = field(default_factory=ConversationHistory)
    pinned_release: str | None = None


@dataclass
class Answer:
    text: str
    abstained: bool
    sources: list[tuple[str, int]] = field(default_factory=list)
    used_chunks: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    standalone_queries: StandaloneQueries | None = None
    release: str | None = None
    error: str | None = None
    error_step: str | None = None
    total_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.abstained and self.error:
            raise ValueError("an abstention is not an error answer")


# ── single steps ─────────────────────────────────────────────────────────────


def _chat(backend: ChatBackend, prompt: str, tag: str) -> str:
    return backend.chat(ChatRequest(messages=[ChatMessage("user", prompt)], tag=tag)).strip()


def reduce_context(query: str, chunk: ContextChunk, backend: ChatBackend) -> ReducedChunk:
    """Boil one context chunk down to the text relevant to the query.

    An EMPTY verdict (or blank extract) marks the chunk as discardable.
    A backend failure degrades to passing the chunk through unreduced —
    one bad call must not sink the whole query.
    """
    prompt = render_prompt("reduce", query=query, chunk=chunk.text)
    try:
        response = _chat(backend, prompt, "reduce")
    except BackendError as exc:
        logger.warning("reduction failed for %s; passing chunk through: %s", chunk.id, exc)
        return ReducedChunk(chunk.id, chunk.text, empty=not chunk.text.strip())
    if response.upper() == REDUCE_EMPTY_SENTINEL or not response.strip():
        return ReducedChunk(chunk.id, "", empty=True)
    return ReducedChunk(chunk.id, response, empty=False)


_RANKING_TOKEN_RE = re.compile(r"\d+")


def _parse_ranking(response: str, count: int) -> list[int]:
    """1-based ranking indices found in a response, deduplicated, in range."""
    indices: list[int] = []
    for token in _RANKING_TOKEN_RE.findall(response):
        value = int(token)
        if 1 <= value <= count and value not in indices:
            indices.append(value)
    return indices


def select_context(
    query: str, reduced: list[ReducedChunk], m: int, backend: ChatBackend
) -> tuple[list[ReducedChunk], bool]:
    """Rank the reduced chunks by usefulness and keep the top ``m``.

    Returns the selection plus a degradation flag: an unparseable ranking
    is reprompted once with a format reminder, then falls back to
    retrieval order. A ranking naming only some chunks is completed in
    retrieval order.
    """
    if not reduced:
        raise ValueError("nothing to select from")
    if m < 1:
        raise ValueError("m must be >= 1")
    numbered = "\n".join(f"Chunk {i}: {c.text}" for i, c in enumerate(reduced, 1))
    prompt = render_prompt("select", query=query, chunks=numbered)
    degraded = False
    ranking: list[int] = []
    try:
        response = _chat(backend, prompt, "select")
        ranking = _parse_ranking(response, len(reduced))
        if not ranking:
            reminder = (
                prompt
                + "\n\nReminder: reply with the chunk numbers only, separated by commas."
            )
            response = _chat(backend, reminder, "select")
            ranking = _parse_ranking(response, len(reduced))
    except BackendError as exc:
        logger.warning("selection call failed: %s", exc)
    if not ranking:
        logger.warning("no usable ranking; falling back to retrieval order")
        degraded = True
        ranking = list(range(1, len(reduced) + 1))
    else:
        for i in range(1, len(reduced) + 1):
            if i not in ranking:
                ranking.append(i)
    keep = ranking[: min(m, len(reduced))]
    return [reduced[i - 1] for i in keep], degraded


def _normalize_for_abstention(text: str) -> str:
    return text.strip().rstrip(".!?").strip().lower()


def generate_answer(
    query: str,
    selected: list[ReducedChunk],
    backend: ChatBackend,
    abstention_phrase: str = DEFAULT_ABSTENTION_PHRASE,
) -> tuple[str, bool]:
    """Generate the final answer strictly from the selected chunks.

    An empty selection abstains without a model call. A model reply equal
    to the abstention phrase (compared case-insensitively, ignoring
    trailing punctuation) is normalized to the configured phrase.
    """
    if not selected:
        return abstention_phrase, True
    numbered = "\n\n".join(f"Chunk {i}:\n{c.text}" for i, c in enumerate(selected, 1))
    prompt = render_prompt(
        "generate", query=query, chunks=numbered, abstention=abstention_phrase
    )
    try:
        response = _chat(backend, prompt, "generate")
    except BackendError as exc:
        raise PipelineError(str(exc), STEP_GENERATE) from exc
    if _normalize_for_abstention(response) == _normalize_for_abstention(abstention_phrase):
        return abstention_phrase, True
    return response, False


# ── baseline (single-chunk) corpus construction ──────────────────────────────


def baseline_windows(length: int, cap: int, overlap: float) -> list[tuple[int, int]]:
    """Character windows for conventional single-granularity chunking.

    Text up to ``cap`` characters stays one window. Longer text is cut
    into ``cap``-sized windows whose starts advance by
    ``cap * (1 - overlap)`` characters; the final window ends at the text
    end. A 4000-character page at cap 3000 and overlap 0.25 yields
    [0, 3000) and [2250, 4000).
    """
    if length < 0:
        raise ValueError("length must be >= 0")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if not 0.0 <= overlap < 0.5:
        raise ValueError("overlap must lie in [0, 0.5)")
    if length <= cap:
        return [(0, length)]
    step = max(1, int(round(cap * (1.0 - overlap))))
    windows = []
    start = 0
    while True:
        end = start + cap
        if end >= length:
            windows.append((start, length))
            break
        windows.append((start, end))
        start += step
    return windows


def build_baseline_corpus(
    pages: list[DocumentPage], cap: int = DEFAULT_BASELINE_CHUNK_CAP, overlap: float = DEFAULT_BASELINE_OVERLAP
) -> tuple[list[SearchChunk], list[ContextChunk]]:
    """Single-granularity chunking: each window is searched and answered from.

    Returned search and context chunks pair up one-to-one (same ids), so
    retrieval traceability degenerates to identity.
    """
    search_chunks: list[SearchChunk] = []
    context_chunks: list[ContextChunk] = []
    for page in pages:
        if not page.text:
            continue
        for ordinal, (start, end) in enumerate(baseline_windows(len(page.text), cap, overlap)):
            chunk_id = f"{page.doc_id}:{page.page_index}:{ordinal}"
            text = page.text[start:end]
            search_chunks.append(
                SearchChunk(
                    id=chunk_id,
                    doc_id=page.doc_id,
                    page_index=page.page_index,
                    ordinal=ordinal,
                    text=text,
                )
            )
            context_chunks.append(
                ContextChunk(
                    id=chunk_id,
                    doc_id=page.doc_id,
                    page_index=page.page_index,
                    text=text,
                    metadata_title=page.doc_title,
                )
            )
    return search_chunks, context_chunks


# ── full answer path ─────────────────────────────────────────────────────────


class _StepClock:
    """Consecutive wall-clock segments; the sum equals the total span."""

    def __init__(self, clock):
        self._clock = clock
        self._start = clock()
        self._last = self._start
        self.timings: dict[str, float] = {}

    def mark(self, step: str) -> None:
        now = self._clock()
        self.timings[step] = self.timings.get(step, 0.0) + (now - self._last) * 1000.0
        self._last = now

    def total_ms(self) -> float:
        return (self._last - self._start) * 1000.0


def _unknown_release_answer(name: str, clock: _StepClock, queries: StandaloneQueries | None) -> Answer:
    # "R88" and "release 88" alike surface as "release 88 is not available"
    try:
        name = parse_release(name).canonical.lower()
    except ValueError:
        name = f"release {name}"
    return Answer(
        text=f"{name} is not available",
        abstained=False,
        standalone_queries=queries,
        timings=clock.timings,
        error="unknown_release",
        total_ms=clock.total_ms(),
    )


def answer(
    query: str,
    session: ChatSession,
    registry,
    cfg: PipelineConfig,
    backend: ChatBackend,
    release: str | None = None,
    clock=time.perf_counter,
) -> Answer:
    """Answer one user query against the registered corpora.

    ``release`` (or a session pin) overrides release extraction. The
    conversation history is updated only on success — error answers leave
    it untouched. Fatal step failures surface as error answers carrying
    the failing step's tag.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    steps = _StepClock(clock)

    extracted: ExtractedRelease | None = None
    standalone: StandaloneQueries | None = None
    try:
        if cfg.enable_rewrite:
            extracted = extract_release(query, registry.releases(), backend)
            standalone = rewrite_queries(query, session.history, extracted, backend)
            queries = standalone.as_list()
            steps.mark(STEP_REWRITE)
        else:
            queries = [("base", query)]
    except BackendError as exc:
        steps.mark(STEP_REWRITE)
        logger.error("rewrite failed: %s", exc)
        return Answer(
            text="",
            abstained=False,
            timings=steps.timings,
            error=str(exc),
            error_step=STEP_REWRITE,
            total_ms=steps.total_ms(),
        )

    # Resolve which release's corpus to answer from. An explicit request
    # wins over extraction; a mention matching no registered release is an
    # error rather than a silent fallback to the latest corpus.
    requested = release or session.pinned_release
    release_name = requested
    try:
        if requested is not None:
            target = registry.resolve(requested)
        elif extracted is not None and extracted.found:
            release_name = extracted.canonical
            target = registry.resolve(extracted.canonical)
        elif extracted is not None and extracted.matched_text:
            steps.mark(STEP_RETRIEVE)
            return _unknown_release_answer(extracted.matched_text, steps, standalone)
        else:
            target = registry.latest()
    except UnknownReleaseError:
        steps.mark(STEP_RETRIEVE)
        return _unknown_release_answer(str(release_name), steps, standalone)

    scheme = "dual" if cfg.enable_dual_chunk else "single"
    try:
        corpus = registry.open_corpus(target.canonical, scheme)
        result = retrieve(queries, corpus, cfg.retrieval, backend)
        steps.mark(STEP_RETRIEVE)
    except BackendError as exc:
        steps.mark(STEP_RETRIEVE)
        logger.error("retrieval failed: %s", exc)
        return Answer(
            text="",
            abstained=False,
            standalone_queries=standalone,
            timings=steps.timings,
            release=target.canonical,
            error=str(exc),
            error_step=STEP_RETRIEVE,
            total_ms=steps.total_ms(),
        )

    working_query = standalone.base if standalone is not None else query

    if cfg.enable_reduce:
        reduced = [
            r
            for r in (reduce_context(working_query, c, backend) for c in result.context_chunks)
            if not r.empty
        ]
        steps.mark(STEP_REDUCE)
        if not reduced:
            # nothing relevant anywhere: abstain
            final = Answer(
                text=cfg.abstention_phrase,
                abstained=True,
                standalone_queries=standalone,
                timings=steps.timings,
                release=target.canonical,
                total_ms=steps.total_ms(),
            )
            session.history.add("user", query)
            session.history.add("assistant", final.text)
            return final
    else:
        reduced = [
            ReducedChunk(c.id, c.text, empty=not c.text.strip())
            for c in result.context_chunks
            if c.text.strip()
        ]

    if cfg.enable_select and reduced:
        selected, _ = select_context(working_query, reduced, cfg.top_m, backend)
        steps.mark(STEP_SELECT)
    else:
        selected = reduced[: cfg.top_m]

    try:
        text, abstained = generate_answer(working_query, selected, backend, cfg.abstention_phrase)
        steps.mark(STEP_GENERATE)
    except PipelineError as exc:
        steps.mark(STEP_GENERATE)
        logger.error("generation failed: %s", exc)
        return Answer(
            text="",
            abstained=False,
            standalone_queries=standalone,
            timings=steps.timings,
            release=target.canonical,
            error=str(exc),
            error_step=exc.step,
            total_ms=steps.total_ms(),
        )

    used = [c.context_chunk_id for c in selected]
    sources: list[tuple[str, int]] = []
    for chunk_id in used:
        context = corpus.context_chunk(chunk_id)
        key = (context.metadata_title, context.page_index)
        if key not in sources:
            sources.append(key)

    final = Answer(
        text=text,
        abstained=abstained,
        sources=sources,
        used_chunks=used,
        timings=steps.timings,
        standalone_queries=standalone,
        release=target.canonical,
        total_ms=steps.total_ms(),
    )
    session.history.add("user", query)
    session.history.add("assistant", text)
    return final

"""Search-chunk retrieval and mapping onto context chunks.

Each standalone query retrieves a fixed budget of search chunks through
two routes — plain cosine similarity and maximal marginal relevance — and
the union, deduplicated in first-seen order, is mapped onto the context
chunks actually handed to the answering steps. Scores are computed in
float64; a zero-norm vector scores 0 against everything; equal scores are
broken by lexicographic chunk id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mrrag.backend import ChatBackend
from mrrag.corpus.chunking import ContextChunk
from mrrag.corpus.store import CorpusHandle, VectorStore

logger = logging.getLogger(__name__)

METHOD_COSINE = "cosine"
METHOD_MMR = "mmr"

DEFAULT_N_COSINE = 2
DEFAULT_N_MMR = 2
DEFAULT_MMR_LAMBDA = 0.5


@dataclass
class RetrievalConfig:
    n_cosine: int = DEFAULT_N_COSINE
    n_mmr: int = DEFAULT_N_MMR
    mmr_lambda: float = DEFAULT_MMR_LAMBDA

    def __post_init__(self) -> None:
        if self.n_cosine < 0 or self.n_mmr < 0:
            raise ValueError("retrieval counts must be >= 0")
        if self.n_cosine + self.n_mmr < 1:
            raise ValueError("at least one chunk must be retrieved per query")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError("mmr_lambda must lie in [0, 1]")


@dataclass(frozen=True)
class ScoredChunk:
    search_chunk_id: str
    score: float
    method: str
    source_query: str


@dataclass
class RetrievalResult:
    context_chunks: list[ContextChunk] = field(default_factory=list)
    provenance: dict[str, list[ScoredChunk]] = field(default_factory=dict)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero (cosine 0 by fiat)."""
    m = matrix.astype(np.float64)
    norms = np.linalg.norm(m, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return m / safe[:, None]


def _unit_vector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0.0 else v


def cosine_scores(query_vec, store: VectorStore) -> np.ndarray:
    """Cosine similarity of the query against every stored vector."""
    return _unit_rows(store.matrix) @ _unit_vector(query_vec)


def _ranked_indices(scores: np.ndarray, ids: tuple[str, ...]) -> list[int]:
    return sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))


def cosine_top(query_vec, store: VectorStore, n: int, source_query: str = "") -> list[ScoredChunk]:
    """The ``n`` most cosine-similar chunks, ties broken by chunk id."""
    if len(store) == 0:
        raise ValueError("store is empty")
    if n < 1:
        return []
    scores = cosine_scores(query_vec, store)
    order = _ranked_indices(scores, store.ids)[: min(n, len(store))]
    return [
        ScoredChunk(store.ids[i], float(scores[i]), METHOD_COSINE, source_query) for i in order
    ]


def mmr_select(
    query_vec,
    store: VectorStore,
    n: int,
    lam: float,
    source_query: str = "",
) -> list[ScoredChunk]:
    """Greedy maximal-marginal-relevance selection.

    The first pick maximizes cosine similarity to the query; each further
    pick maximizes ``lam * cos(q, d) - (1 - lam) * max_s cos(d, s)`` over
    the already selected chunks ``s``. With ``lam == 1`` the output equals
    the plain cosine ranking, tie rule included.
    """
    if len(store) == 0:
        raise ValueError("store is empty")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if n < 1:
        return []
    unit = _unit_rows(store.matrix)
    relevance = unit @ _unit_vector(query_vec)
    count = min(n, len(store))
    selected: list[int] = []
    picked: list[ScoredChunk] = []
    max_sim_to_selected = np.full(len(store), -np.inf)
    remaining = set(range(len(store)))
    for step in range(count):
        if step == 0:
            best = min(remaining, key=lambda i: (-relevance[i], store.ids[i]))
            criterion = float(relevance[best])
        else:
            def mmr_value(i: int) -> float:
                return lam * relevance[i] - (1.0 - lam) * max_sim_to_selected[i]

            best = min(remaining, key=lambda i: (-mmr_value(i), store.ids[i]))
            criterion = float(mmr_value(best))
        selected.append(best)
        remaining.discard(best)
        picked.append(ScoredChunk(store.ids[best], criterion, METHOD_MMR, source_query))
        if remaining:
            sims = unit @ unit[best]
            np.maximum(max_sim_to_selected, sims, out=max_sim_to_selected)
    return picked


def retrieve(
    queries: list[tuple[str, str]],
    corpus: CorpusHandle,
    cfg: RetrievalConfig,
    backend: ChatBackend,
) -> RetrievalResult:
    """Retrieve context chunks for the standalone queries of one question.

    Queries run in the given order; per query the cosine hits precede the
    MMR hits. A chunk found by both routes for one query keeps a single
    union entry but both provenance records. Context chunks deduplicate in
    first-seen order, so at most ``n_cosine + n_mmr`` distinct search
    chunks per query feed the union.
    """
    if not queries:
        raise ValueError("at least one standalone query is required")
    if len(corpus.store) == 0:
        raise ValueError("corpus has no search chunks")
    texts = [text for _, text in queries]
    vectors = backend.embed(texts)

    result = RetrievalResult()
    seen_context: set[str] = set()
    for (label, _), vec in zip(queries, vectors):
        hits = cosine_top(vec, corpus.store, cfg.n_cosine, label) + mmr_select(
            vec, corpus.store, cfg.n_mmr, cfg.mmr_lambda, label
        )
        for hit in hits:
            context = corpus.context_for(hit.search_chunk_id)
            result.provenance.setdefault(context.id, []).append(hit)
            if context.id not in seen_context:
                seen_context.add(context.id)
                result.context_chunks.append(context)
    return result

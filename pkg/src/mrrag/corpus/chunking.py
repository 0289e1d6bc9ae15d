"""Dual chunking: small search chunks, page-sized context chunks.

Every non-empty page yields exactly ``k`` search chunks (near-equal split
by character count) used for embedding and retrieval, plus exactly one
context chunk — the page padded with up to ``ps`` characters from each
neighbouring page — used for answering. The two sets stay traceable to
each other through the (doc_id, page_index) key.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from mrrag.corpus.preprocess import DocumentPage

logger = logging.getLogger(__name__)

DEFAULT_K = 2
DEFAULT_PS = 500


def search_chunk_id(doc_id: str, page_index: int, ordinal: int) -> str:
    return f"{doc_id}:{page_index}:{ordinal}"


def context_chunk_id(doc_id: str, page_index: int) -> str:
    return f"{doc_id}:{page_index}"


@dataclass(frozen=True)
class SearchChunk:
    id: str
    doc_id: str
    page_index: int
    ordinal: int
    text: str

    def __post_init__(self) -> None:
        if self.page_index < 0 or self.ordinal < 0:
            raise ValueError("page_index and ordinal must be >= 0")


@dataclass(frozen=True)
class ContextChunk:
    id: str
    doc_id: str
    page_index: int
    text: str
    metadata_title: str
    prev_pad_len: int = 0
    next_pad_len: int = 0

    def __post_init__(self) -> None:
        if self.prev_pad_len < 0 or self.next_pad_len < 0:
            raise ValueError("pad lengths must be >= 0")


def split_page(text: str, k: int) -> list[str]:
    """Split ``text`` into k contiguous near-equal pieces.

    The first ``len(text) % k`` pieces carry the extra character, so piece
    lengths differ by at most one and concatenation reproduces the input.
    Pages shorter than k characters simply produce empty trailing pieces.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    base, extra = divmod(len(text), k)
    pieces = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        pieces.append(text[start : start + size])
        start += size
    return pieces


def _group_by_document(pages: Iterable[DocumentPage]) -> list[list[DocumentPage]]:
    grouped: dict[str, list[DocumentPage]] = {}
    for page in pages:
        grouped.setdefault(page.doc_id, []).append(page)
    return [sorted(doc_pages, key=lambda p: p.page_index) for doc_pages in grouped.values()]


def dual_chunk(
    pages: Iterable[DocumentPage], k: int = DEFAULT_K, ps: int = DEFAULT_PS
) -> tuple[list[SearchChunk], list[ContextChunk]]:
    """Chunk cleaned pages into search chunks and context chunks.

    Empty pages produce no chunks but keep their position in the page
    numbering, so they still bound the context padding of their
    neighbours (contributing zero padding). Padding never exceeds the
    neighbouring page's length and is zero at document boundaries.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if ps < 0:
        raise ValueError("ps must be >= 0")
    search_chunks: list[SearchChunk] = []
    context_chunks: list[ContextChunk] = []
    for doc_pages in _group_by_document(pages):
        for i, page in enumerate(doc_pages):
            if not page.text:
                continue
            for ordinal, piece in enumerate(split_page(page.text, k)):
                search_chunks.append(
                    SearchChunk(
                        id=search_chunk_id(page.doc_id, page.page_index, ordinal),
                        doc_id=page.doc_id,
                        page_index=page.page_index,
                        ordinal=ordinal,
                        text=piece,
                    )
                )
            prev_text = doc_pages[i - 1].text if i > 0 else ""
            next_text = doc_pages[i + 1].text if i + 1 < len(doc_pages) else ""
            prev_pad = min(ps, len(prev_text))
            next_pad = min(ps, len(next_text))
            prefix = prev_text[-prev_pad:] if prev_pad else ""
            suffix = next_text[:next_pad] if next_pad else ""
            context_chunks.append(
                ContextChunk(
                    id=context_chunk_id(page.doc_id, page.page_index),
                    doc_id=page.doc_id,
                    page_index=page.page_index,
                    text=prefix + page.text + suffix,
                    metadata_title=page.doc_title,
                    prev_pad_len=prev_pad,
                    next_pad_len=next_pad,
                )
            )
    return search_chunks, context_chunks

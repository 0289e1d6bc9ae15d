"""Vector store and on-disk corpus layout.

A built corpus directory holds:

    manifest.json          corpus parameters and counts
    search_chunks.jsonl    one search chunk per line
    context_chunks.jsonl   one context chunk per line
    embeddings.f32         row-major little-endian float32 matrix
    embeddings.json        {"rows": N, "dim": D} sidecar

Row i of the matrix embeds line i of search_chunks.jsonl. Built corpora
are immutable; rebuilding a release replaces the directory wholesale.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mrrag.corpus.chunking import ContextChunk, SearchChunk

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
SEARCH_CHUNKS_FILE = "search_chunks.jsonl"
CONTEXT_CHUNKS_FILE = "context_chunks.jsonl"
EMBEDDINGS_FILE = "embeddings.f32"
EMBEDDINGS_SIDECAR_FILE = "embeddings.json"

DUAL_SCHEME = "dual"
SINGLE_SCHEME = "single"


class CorpusFormatError(Exception):
    """A corpus directory is missing pieces or internally inconsistent."""


class VectorStore:
    """Immutable id-addressed embedding matrix."""

    def __init__(self, ids: list[str], matrix: np.ndarray):
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-dimensional")
        if len(ids) != matrix.shape[0]:
            raise ValueError("one id per matrix row required")
        self.ids: tuple[str, ...] = tuple(ids)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @classmethod
    def from_vectors(cls, ids: list[str], vectors: list[list[float]], dim: int | None = None) -> "VectorStore":
        if vectors:
            dims = {len(v) for v in vectors}
            if len(dims) != 1:
                raise ValueError("inconsistent vector dimensions")
            matrix = np.array(vectors, dtype=np.float32)
        else:
            matrix = np.zeros((0, dim or 0), dtype=np.float32)
        return cls(ids, matrix)


def _chunk_to_record(chunk: SearchChunk | ContextChunk) -> dict:
    if isinstance(chunk, SearchChunk):
        return {
            "id": chunk.id,
            "doc_id": chunk.doc_id,
            "page_index": chunk.page_index,
            "ordinal": chunk.ordinal,
            "text": chunk.text,
        }
    return {
        "id": chunk.id,
        "doc_id": chunk.doc_id,
        "page_index": chunk.page_index,
        "text": chunk.text,
        "metadata_title": chunk.metadata_title,
        "prev_pad_len": chunk.prev_pad_len,
        "next_pad_len": chunk.next_pad_len,
    }


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_corpus(
    directory: str | Path,
    manifest: dict,
    search_chunks: list[SearchChunk],
    context_chunks: list[ContextChunk],
    store: VectorStore,
) -> None:
    """Persist one built corpus into ``directory`` (created if missing)."""
    if list(store.ids) != [c.id for c in search_chunks]:
        raise ValueError("store rows must line up with search chunks")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_jsonl(directory / SEARCH_CHUNKS_FILE, [_chunk_to_record(c) for c in search_chunks])
    _write_jsonl(directory / CONTEXT_CHUNKS_FILE, [_chunk_to_record(c) for c in context_chunks])
    matrix = np.ascontiguousarray(store.matrix, dtype="<f4")
    (directory / EMBEDDINGS_FILE).write_bytes(matrix.tobytes(order="C"))
    (directory / EMBEDDINGS_SIDECAR_FILE).write_text(
        json.dumps({"rows": len(store), "dim": store.dim}, sort_keys=True) + "\n",
        encoding="utf-8",
    )


class CorpusHandle:
    """A loaded, read-only corpus."""

    def __init__(
        self,
        manifest: dict,
        search_chunks: list[SearchChunk],
        context_chunks: list[ContextChunk],
        store: VectorStore,
    ):
        self.manifest = manifest
        self.search_chunks = search_chunks
        self.context_chunks = context_chunks
        self.store = store
        self._context_by_id = {c.id: c for c in context_chunks}
        self._search_by_id = {c.id: c for c in search_chunks}
        scheme = manifest.get("scheme", DUAL_SCHEME)
        if scheme == SINGLE_SCHEME:
            # single-chunk corpora: every window is its own context
            self._context_id_for_search = {c.id: c.id for c in search_chunks}
        else:
            self._context_id_for_search = {
                c.id: f"{c.doc_id}:{c.page_index}" for c in search_chunks
            }

    @property
    def scheme(self) -> str:
        return self.manifest.get("scheme", DUAL_SCHEME)

    @property
    def release(self) -> str:
        return self.manifest.get("release", "")

    def search_chunk(self, chunk_id: str) -> SearchChunk:
        return self._search_by_id[chunk_id]

    def context_for(self, search_chunk_id: str) -> ContextChunk:
        """Map a search chunk to the context chunk used for answering."""
        context_id = self._context_id_for_search[search_chunk_id]
        return self._context_by_id[context_id]

    def context_chunk(self, context_id: str) -> ContextChunk:
        return self._context_by_id[context_id]


def load_corpus(directory: str | Path) -> CorpusHandle:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise CorpusFormatError(f"no manifest in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    search_records = _read_jsonl(directory / SEARCH_CHUNKS_FILE)
    context_records = _read_jsonl(directory / CONTEXT_CHUNKS_FILE)
    search_chunks = [
        SearchChunk(
            id=r["id"],
            doc_id=r["doc_id"],
            page_index=r["page_index"],
            ordinal=r["ordinal"],
            text=r["text"],
        )
        for r in search_records
    ]
    context_chunks = [
        ContextChunk(
            id=r["id"],
            doc_id=r["doc_id"],
            page_index=r["page_index"],
            text=r["text"],
            metadata_title=r["metadata_title"],
            prev_pad_len=r.get("prev_pad_len", 0),
            next_pad_len=r.get("next_pad_len", 0),
        )
        for r in context_records
    ]
    sidecar = json.loads((directory / EMBEDDINGS_SIDECAR_FILE).read_text(encoding="utf-8"))
    rows, dim = int(sidecar["rows"]), int(sidecar["dim"])
    blob = (directory / EMBEDDINGS_FILE).read_bytes()
    expected = rows * dim * 4
    if len(blob) != expected:
        raise CorpusFormatError(
            f"embeddings.f32 holds {len(blob)} bytes, sidecar promises {expected}"
        )
    matrix = np.frombuffer(blob, dtype="<f4").reshape(rows, dim).copy()
    if rows != len(search_chunks):
        raise CorpusFormatError("embedding rows do not match search chunk count")
    store = VectorStore([c.id for c in search_chunks], matrix)
    return CorpusHandle(manifest, search_chunks, context_chunks, store)

"""Corpus construction and the release registry.

A data directory holds one registry file plus one corpus root per
registered release; each root contains a ``dual/`` corpus (search chunks +
padded page contexts) and a ``single/`` corpus (conventional capped
windows with overlap) so every pipeline configuration finds its chunk
scheme ready. Builds are atomic: everything is written to a scratch
directory first and moved into place, so a failed build leaves nothing
behind.

Ingestion reads a ``docs.json`` descriptor listing document files. A
``.json`` document carries structured pages (regions with text, tables,
diagram cells); any other file is plain text, split into pages at the
descriptor's page-break marker, or into fixed windows when no marker is
given.
"""

from __future__ import annotations

import json
import logging
import shutil
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from mrrag.backend import BackendError, ChatBackend
from mrrag.corpus.chunking import dual_chunk
from mrrag.corpus.preprocess import (
    Cell,
    DocumentPage,
    PageRegion,
    RawPage,
    preprocess_page,
    strip_plain_text,
)
from mrrag.corpus.releases import (
    RegistryError,
    ReleaseId,
    UnknownReleaseError,
    parse_release,
    release_slug,
)
from mrrag.corpus.store import (
    DUAL_SCHEME,
    SINGLE_SCHEME,
    CorpusHandle,
    VectorStore,
    load_corpus,
    write_corpus,
)
from mrrag.pipeline import build_baseline_corpus

logger = logging.getLogger(__name__)

REGISTRY_FILE = "registry.json"
CORPORA_DIR = "corpora"
DOCS_DESCRIPTOR = "docs.json"

DEFAULT_FALLBACK_PAGE_CHARS = 3000
EMBED_BATCH_SIZE = 64


class CorpusBuildError(Exception):
    """Corpus construction failed; partial output has been removed."""


@dataclass(frozen=True)
class CorpusManifest:
    """Bookkeeping stored next to each built corpus."""

    release: str
    scheme: str
    doc_count: int
    page_count: int
    search_chunk_count: int
    embedding_model_id: str
    embedding_dim: int
    k: int = 0
    ps: int = 0
    cap: int = 0
    overlap: float = 0.0

    def to_dict(self) -> dict:
        record = {
            "release": self.release,
            "scheme": self.scheme,
            "doc_count": self.doc_count,
            "page_count": self.page_count,
            "search_chunk_count": self.search_chunk_count,
            "embedding_model_id": self.embedding_model_id,
            "embedding_dim": self.embedding_dim,
        }
        if self.scheme == DUAL_SCHEME:
            record.update({"k": self.k, "ps": self.ps})
        else:
            record.update({"cap": self.cap, "overlap": self.overlap})
        return record


def embed_corpus(search_chunks, backend: ChatBackend, batch_size: int = EMBED_BATCH_SIZE) -> VectorStore:
    """Embed every search chunk into an immutable vector store.

    Rows line up with the chunk order. Context chunks are never embedded.
    """
    ids = [c.id for c in search_chunks]
    vectors: list[list[float]] = []
    texts = [c.text for c in search_chunks]
    for start in range(0, len(texts), batch_size):
        vectors.extend(backend.embed(texts[start : start + batch_size]))
    dim = len(vectors[0]) if vectors else 0
    if any(len(v) != dim for v in vectors):
        raise BackendError("embedding dimension drifted within one corpus", retryable=False)
    return VectorStore.from_vectors(ids, vectors, dim=dim)


class Registry:
    """Registered releases and their corpus directories.

    Reads are lock-free; registration is serialized in-process and written
    atomically (temp file + rename). One writer per data directory is
    assumed.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self._lock = threading.Lock()
        self._handles: dict[tuple[str, str], CorpusHandle] = {}

    # ── persistence ──────────────────────────────────────────────

    def _registry_path(self) -> Path:
        return self.data_dir / REGISTRY_FILE

    def _load(self) -> dict[str, dict]:
        path = self._registry_path()
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def _save(self, records: dict[str, dict]) -> None:
        self.data_dir.mkdir(parents=True, exist_ok=True)
        tmp = self._registry_path().with_suffix(f".tmp-{uuid.uuid4().hex}")
        tmp.write_text(json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self._registry_path())

    # ── queries ──────────────────────────────────────────────────

    def releases(self) -> list[ReleaseId]:
        records = self._load()
        releases = [
            ReleaseId(raw=r["raw"], canonical=canonical, ordering_key=tuple(r["key"]))
            for canonical, r in records.items()
        ]
        return sorted(releases, key=lambda r: r.ordering_key)

    def is_empty(self) -> bool:
        return not self._load()

    def is_registered(self, canonical: str) -> bool:
        return canonical in self._load()

    def resolve(self, text: str) -> ReleaseId:
        """Map a release name to a registered release, or fail."""
        try:
            wanted = parse_release(text)
        except ValueError:
            raise UnknownReleaseError(f"{text!r} names no release")
        for release in self.releases():
            if release.ordering_key == wanted.ordering_key:
                return release
        raise UnknownReleaseError(f"{text!r} matches no registered release")

    def latest(self) -> ReleaseId:
        releases = self.releases()
        if not releases:
            raise RegistryError("no releases registered")
        return releases[-1]

    def corpus_root(self, canonical: str) -> Path:
        records = self._load()
        if canonical not in records:
            raise UnknownReleaseError(f"{canonical!r} is not registered")
        return self.data_dir / records[canonical]["path"]

    def open_corpus(self, canonical: str, scheme: str = DUAL_SCHEME) -> CorpusHandle:
        key = (canonical, scheme)
        if key not in self._handles:
            directory = self.corpus_root(canonical) / scheme
            self._handles[key] = load_corpus(directory)
        return self._handles[key]

    # ── registration ─────────────────────────────────────────────

    def register(self, release: ReleaseId, overwrite: bool = False) -> Path:
        """Record a release and return its (created) corpus root."""
        with self._lock:
            records = self._load()
            if release.canonical in records and not overwrite:
                raise RegistryError(f"{release.canonical} is already registered")
            rel_path = f"{CORPORA_DIR}/{release_slug(release)}"
            records[release.canonical] = {
                "raw": release.raw,
                "key": list(release.ordering_key),
                "path": rel_path,
            }
            root = self.data_dir / rel_path
            root.mkdir(parents=True, exist_ok=True)
            self._save(records)
            self._handles = {k: v for k, v in self._handles.items() if k[0] != release.canonical}
            return root


def select_corpus(release: str | None, registry: Registry, scheme: str = DUAL_SCHEME) -> CorpusHandle:
    """The corpus to answer from: the named release's, or the latest."""
    target = registry.resolve(release) if release is not None else registry.latest()
    return registry.open_corpus(target.canonical, scheme)


def build_corpus(
    release: ReleaseId,
    pages: list[DocumentPage],
    backend: ChatBackend,
    registry: Registry,
    *,
    k: int = 2,
    ps: int = 500,
    cap: int = 3000,
    overlap: float = 0.25,
    embedding_model_id: str = "",
    overwrite: bool = False,
) -> dict[str, CorpusManifest]:
    """Build and persist both chunk schemes for one release.

    Pages must all belong to ``release``. The registry is updated only
    after both corpora are fully written; an interrupted build cleans up
    after itself.
    """
    if not pages:
        raise CorpusBuildError("no pages to build from")
    for page in pages:
        if page.release.canonical != release.canonical:
            raise CorpusBuildError(
                f"page {page.doc_id}:{page.page_index} belongs to {page.release.canonical}, "
                f"not {release.canonical}"
            )
    if registry.is_registered(release.canonical) and not overwrite:
        raise RegistryError(f"{release.canonical} is already registered")

    doc_count = len({p.doc_id for p in pages})
    page_count = len(pages)
    scratch = registry.data_dir / CORPORA_DIR / f".build-{uuid.uuid4().hex}"
    manifests: dict[str, CorpusManifest] = {}
    try:
        for scheme in (DUAL_SCHEME, SINGLE_SCHEME):
            if scheme == DUAL_SCHEME:
                search_chunks, context_chunks = dual_chunk(pages, k=k, ps=ps)
            else:
                search_chunks, context_chunks = build_baseline_corpus(pages, cap=cap, overlap=overlap)
            if not search_chunks:
                raise CorpusBuildError("all pages are empty after preprocessing")
            store = embed_corpus(search_chunks, backend)
            manifest = CorpusManifest(
                release=release.canonical,
                scheme=scheme,
                doc_count=doc_count,
                page_count=page_count,
                search_chunk_count=len(search_chunks),
                embedding_model_id=embedding_model_id,
                embedding_dim=store.dim,
                k=k,
                ps=ps,
                cap=cap,
                overlap=overlap,
            )
            write_corpus(scratch / scheme, manifest.to_dict(), search_chunks, context_chunks, store)
            manifests[scheme] = manifest
        root = registry.register(release, overwrite=overwrite)
        for scheme in (DUAL_SCHEME, SINGLE_SCHEME):
            target = root / scheme
            if target.exists():
                shutil.rmtree(target)
            (scratch / scheme).rename(target)
    except Exception:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    shutil.rmtree(scratch, ignore_errors=True)
    logger.info(
        "built corpus for %s: %d docs, %d pages, %d dual search chunks",
        release.canonical,
        doc_count,
        page_count,
        manifests[DUAL_SCHEME].search_chunk_count,
    )
    return manifests


# ── ingestion ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DocDescriptor:
    doc_id: str
    title: str
    file: str
    release: ReleaseId
    page_break: str | None = None


def load_descriptors(docs_dir: str | Path) -> list[DocDescriptor]:
    docs_dir = Path(docs_dir)
    descriptor_path = docs_dir / DOCS_DESCRIPTOR
    if not descriptor_path.exists():
        raise CorpusBuildError(f"no {DOCS_DESCRIPTOR} in {docs_dir}")
    raw = json.loads(descriptor_path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise CorpusBuildError(f"{DOCS_DESCRIPTOR} must hold a list of documents")
    descriptors = []
    for entry in raw:
        try:
            descriptors.append(
                DocDescriptor(
                    doc_id=entry["doc_id"],
                    title=entry["title"],
                    file=entry["file"],
                    release=parse_release(entry["release"]),
                    page_break=entry.get("page_break"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise CorpusBuildError(f"bad document entry {entry!r}: {exc}")
    return descriptors


def _region_from_record(record: dict) -> PageRegion:
    kind = record.get("kind", "text")
    if kind == "text":
        return PageRegion(kind="text", text=record.get("text", ""))
    cells = tuple(
        Cell(row=int(c["row"]), col=int(c["col"]), text=str(c["text"]))
        for c in record.get("cells", [])
    )
    return PageRegion(kind=kind, cells=cells)


def pages_from_file(
    descriptor: DocDescriptor,
    docs_dir: str | Path,
    strip_patterns,
    fallback_page_chars: int = DEFAULT_FALLBACK_PAGE_CHARS,
) -> list[DocumentPage]:
    """Turn one document file into cleaned, contiguously numbered pages."""
    path = Path(docs_dir) / descriptor.file
    if not path.exists():
        raise CorpusBuildError(f"document file {path} is missing")
    if path.suffix == ".json":
        raw = json.loads(path.read_text(encoding="utf-8"))
        pages = []
        for index, page_record in enumerate(raw.get("pages", [])):
            regions = tuple(_region_from_record(r) for r in page_record.get("regions", []))
            raw_page = RawPage(
                doc_id=descriptor.doc_id,
                doc_title=descriptor.title,
                release=descriptor.release,
                page_index=index,
                regions=regions,
            )
            pages.append(preprocess_page(raw_page, strip_patterns))
        return pages

    text = path.read_text(encoding="utf-8")
    if descriptor.page_break:
        raw_pages = text.split(descriptor.page_break)
    else:
        size = max(1, fallback_page_chars)
        raw_pages = [text[i : i + size] for i in range(0, len(text), size)] or [""]
    pages = []
    for index, raw_text in enumerate(raw_pages):
        cleaned = strip_plain_text(raw_text, strip_patterns).strip()
        pages.append(
            DocumentPage(
                doc_id=descriptor.doc_id,
                doc_title=descriptor.title,
                release=descriptor.release,
                page_index=index,
                text=cleaned,
            )
        )
    return pages


def ingest_release(
    release_text: str,
    docs_dir: str | Path,
    backend: ChatBackend,
    registry: Registry,
    *,
    strip_patterns,
    k: int = 2,
    ps: int = 500,
    cap: int = 3000,
    overlap: float = 0.25,
    fallback_page_chars: int = DEFAULT_FALLBACK_PAGE_CHARS,
    embedding_model_id: str = "",
    overwrite: bool = False,
) -> dict[str, CorpusManifest]:
    """Ingest every descriptor document of one release and build its corpora."""
    release = parse_release(release_text)
    descriptors = [
        d for d in load_descriptors(docs_dir) if d.release.canonical == release.canonical
    ]
    if not descriptors:
        raise CorpusBuildError(f"no documents for {release.canonical} in {docs_dir}")
    pages: list[DocumentPage] = []
    for descriptor in descriptors:
        pages.extend(
            pages_from_file(descriptor, docs_dir, strip_patterns, fallback_page_chars)
        )
    return build_corpus(
        release,
        pages,
        backend,
        registry,
        k=k,
        ps=ps,
        cap=cap,
        overlap=overlap,
        embedding_model_id=embedding_model_id,
        overwrite=overwrite,
    )

"""Top-level wiring: configuration in, answers out.

The engine owns one backend, one release registry, and one pipeline
configuration, and exposes the handful of operations every entry point
(CLI, HTTP service, benchmark harness) needs. Sessions are plain state
objects; callers hold them and pass them back per query.
"""

from __future__ import annotations

import logging

from mrrag import pipeline
from mrrag.backend import ChatBackend
from mrrag.config import AppConfig, make_backend
from mrrag.corpus.build import CorpusManifest, Registry, ingest_release
from mrrag.corpus.releases import ReleaseId
from mrrag.pipeline import Answer, ChatSession

logger = logging.getLogger(__name__)


class Engine:
    """One configured answering system."""

    def __init__(
        self,
        config: AppConfig,
        backend: ChatBackend | None = None,
        registry: Registry | None = None,
    ):
        self.config = config
        self.backend = backend if backend is not None else make_backend(config.backend)
        self.registry = registry if registry is not None else Registry(config.corpus.data_dir)
        self.pipeline_config = config.pipeline_config()

    def new_session(self, release: str | None = None) -> ChatSession:
        return ChatSession(pinned_release=release)

    def releases(self) -> list[ReleaseId]:
        return self.registry.releases()

    def has_corpora(self) -> bool:
        return not self.registry.is_empty()

    def answer(self, session: ChatSession, query: str, release: str | None = None) -> Answer:
        return pipeline.answer(
            query,
            session,
            self.registry,
            self.pipeline_config,
            self.backend,
            release=release,
        )

    def ingest(
        self, release_text: str, docs_dir: str, overwrite: bool = False
    ) -> dict[str, CorpusManifest]:
        corpus_cfg = self.config.corpus
        settings = self.config.pipeline
        return ingest_release(
            release_text,
            docs_dir,
            self.backend,
            self.registry,
            strip_patterns=corpus_cfg.strip_patterns,
            k=corpus_cfg.k,
            ps=corpus_cfg.ps,
            cap=settings.baseline_chunk_cap,
            overlap=settings.baseline_overlap,
            fallback_page_chars=corpus_cfg.fallback_page_chars,
            embedding_model_id=self.config.backend.embedding_model,
            overwrite=overwrite,
        )

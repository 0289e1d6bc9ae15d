"""Application configuration.

Settings come from three layers, later ones winning: dataclass defaults,
an optional JSON config file, and ``MRRAG_``-prefixed environment
variables. Environment keys name a section and field, upper-cased with
underscores, e.g. ``MRRAG_BACKEND_URL`` or ``MRRAG_SERVICE_PORT``;
list-valued fields take JSON.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from mrrag.backend import (
    DEFAULT_BACKOFF_SECONDS,
    DEFAULT_CONCURRENCY,
    DEFAULT_MAX_TOKENS,
    DEFAULT_RETRIES,
    DEFAULT_TEMPERATURE,
    MOCK_EMBEDDING_DIM,
    MOCK_EMBEDDING_MODEL_ID,
    BackendScript,
    ChatBackend,
    HttpBackend,
    MockBackend,
)
from mrrag.corpus.preprocess import DEFAULT_STRIP_PATTERNS
from mrrag.pipeline import DEFAULT_ABSTENTION_PHRASE, PipelineConfig
from mrrag.retrieval import RetrievalConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "MRRAG_"


class ConfigError(Exception):
    """Configuration is missing, unreadable, or inconsistent."""


@dataclass
class BackendConfig:
    mode: str = "mock"
    url: str = "http://localhost:8080/v1"
    model: str = "local-chat"
    embedding_model: str = MOCK_EMBEDDING_MODEL_ID
    script: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    retries: int = DEFAULT_RETRIES
    backoff_seconds: float = DEFAULT_BACKOFF_SECONDS
    concurrency: int = DEFAULT_CONCURRENCY
    timeout: float = 120.0
    embedding_dim: int = MOCK_EMBEDDING_DIM
    embedding_seed: int = 0


@dataclass
class CorpusConfig:
    data_dir: str = "data"
    k: int = 2
    ps: int = 500
    strip_patterns: list[str] = field(default_factory=lambda: list(DEFAULT_STRIP_PATTERNS))
    fallback_page_chars: int = 3000


@dataclass
class PipelineSettings:
    top_m: int = 3
    n_cosine: int = 2
    n_mmr: int = 2
    mmr_lambda: float = 0.5
    enable_rewrite: bool = True
    enable_dual_chunk: bool = True
    enable_reduce: bool = True
    enable_select: bool = True
    baseline_mode: bool = False
    baseline_chunk_cap: int = 3000
    baseline_overlap: float = 0.25
    abstention_phrase: str = DEFAULT_ABSTENTION_PHRASE


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    cors_origins: list[str] = field(default_factory=lambda: ["*"])
    session_ttl_hours: float = 24.0
    reports_dir: str = "reports"
    request_log: str = ""


@dataclass
class AppConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def pipeline_config(self) -> PipelineConfig:
        p = self.pipeline
        return PipelineConfig(
            k=self.corpus.k,
            ps=self.corpus.ps,
            retrieval=RetrievalConfig(
                n_cosine=p.n_cosine, n_mmr=p.n_mmr, mmr_lambda=p.mmr_lambda
            ),
            top_m=p.top_m,
            enable_rewrite=p.enable_rewrite,
            enable_dual_chunk=p.enable_dual_chunk,
            enable_reduce=p.enable_reduce,
            enable_select=p.enable_select,
            baseline_mode=p.baseline_mode,
            baseline_chunk_cap=p.baseline_chunk_cap,
            baseline_overlap=p.baseline_overlap,
            abstention_phrase=p.abstention_phrase,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTION_FIELDS = {
    "backend": BackendConfig,
    "corpus": CorpusConfig,
    "pipeline": PipelineSettings,
    "service": ServiceConfig,
}


def _coerce(raw: str, target_type) -> object:
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{raw!r} is not a boolean")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    # list-typed fields take JSON
    value = json.loads(raw)
    if not isinstance(value, list):
        raise ConfigError(f"{raw!r} must be a JSON list")
    return value


def _apply_section(section_obj, values: dict, where: str) -> None:
    valid = {f.name: f.type for f in dataclasses.fields(section_obj)}
    for key, value in values.items():
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in {where}")
        setattr(section_obj, key, value)


def load_config(path: str | Path | None = None, env: dict | None = None) -> AppConfig:
    """Assemble configuration from defaults, optional file, and environment."""
    config = AppConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold an object")
        for section, values in raw.items():
            if section not in _SECTION_FIELDS:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {section!r} must hold an object")
            _apply_section(getattr(config, section), values, str(path))

    env = os.environ if env is None else env
    for raw_key, raw_value in env.items():
        if not raw_key.startswith(ENV_PREFIX):
            continue
        remainder = raw_key[len(ENV_PREFIX):].lower()
        section, _, field_name = remainder.partition("_")
        section_cls = _SECTION_FIELDS.get(section)
        if section_cls is None or not field_name:
            logger.warning("ignoring unrecognized environment variable %s", raw_key)
            continue
        section_obj = getattr(config, section)
        fields_by_name = {f.name: f for f in dataclasses.fields(section_cls)}
        if field_name not in fields_by_name:
            logger.warning("ignoring unrecognized environment variable %s", raw_key)
            continue
        current = getattr(section_obj, field_name)
        target_type = type(current) if current is not None else str
        try:
            setattr(section_obj, field_name, _coerce(raw_value, target_type))
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad value for {raw_key}: {exc}")
    return config


def make_backend(config: BackendConfig) -> ChatBackend:
    """Instantiate the configured chat/embedding backend."""
    if config.mode == "mock":
        script = BackendScript()
        if config.script:
            script_path = Path(config.script)
            if not script_path.exists():
                raise ConfigError(f"backend script {script_path} does not exist")
            script = BackendScript.from_file(script_path)
        return MockBackend(
            script, embedding_dim=config.embedding_dim, seed=config.embedding_seed
        )
    if config.mode == "http":
        return HttpBackend(
            config.url,
            config.model,
            retries=config.retries,
            backoff_seconds=config.backoff_seconds,
            concurrency=config.concurrency,
            timeout=config.timeout,
            embedding_model=config.embedding_model,
        )
    raise ConfigError(f"unknown backend mode {config.mode!r}")

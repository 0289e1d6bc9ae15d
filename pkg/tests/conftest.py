"""Shared fixtures: the two-release fixture corpus and the scripted backend."""

from pathlib import Path

import pytest

from mrrag.backend import MOCK_EMBEDDING_MODEL_ID, BackendScript, MockBackend
from mrrag.config import AppConfig
from mrrag.corpus.build import Registry, ingest_release
from mrrag.corpus.preprocess import DEFAULT_STRIP_PATTERNS

FIXTURES_DIR = Path(__file__).parent / "fixtures"
DOCS_DIR = FIXTURES_DIR / "docs"
FIXTURE_RELEASES = ("Release 12", "Release 17.20")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def script() -> BackendScript:
    return BackendScript.from_file(FIXTURES_DIR / "mock_script.json")


@pytest.fixture()
def backend(script) -> MockBackend:
    # fresh per test: the call log accumulates
    return MockBackend(script)


@pytest.fixture(scope="session")
def corpora_dir(tmp_path_factory, script) -> Path:
    """Both fixture releases ingested once per test session (read-only after)."""
    data_dir = tmp_path_factory.mktemp("corpora")
    registry = Registry(data_dir)
    ingest_backend = MockBackend(script)
    for release in FIXTURE_RELEASES:
        ingest_release(
            release,
            DOCS_DIR,
            ingest_backend,
            registry,
            strip_patterns=list(DEFAULT_STRIP_PATTERNS),
            embedding_model_id=MOCK_EMBEDDING_MODEL_ID,
        )
    return data_dir


@pytest.fixture()
def registry(corpora_dir) -> Registry:
    return Registry(corpora_dir)


@pytest.fixture()
def app_config(corpora_dir) -> AppConfig:
    """Config wired to the session corpus and the scripted backend."""
    config = AppConfig()
    config.backend.script = str(FIXTURES_DIR / "mock_script.json")
    config.corpus.data_dir = str(corpora_dir)
    return config

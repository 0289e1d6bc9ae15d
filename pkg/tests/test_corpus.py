"""Corpus tests: release identity, persistence format, registry, ingestion."""

import json

import numpy as np
import pytest

from mrrag.backend import BackendError, BackendScript, MockBackend
from mrrag.corpus.build import (
    CorpusBuildError,
    Registry,
    build_corpus,
    embed_corpus,
    ingest_release,
    load_descriptors,
    pages_from_file,
    select_corpus,
)
from mrrag.corpus.chunking import dual_chunk
from mrrag.corpus.preprocess import DEFAULT_STRIP_PATTERNS, DocumentPage
from mrrag.corpus.releases import (
    RegistryError,
    UnknownReleaseError,
    parse_release,
    release_slug,
)
from mrrag.corpus.store import (
    CorpusFormatError,
    VectorStore,
    load_corpus,
    write_corpus,
)

R12 = parse_release("Release 12")


def page(doc_id: str, index: int, text: str, release=R12) -> DocumentPage:
    return DocumentPage(
        doc_id=doc_id, doc_title=doc_id.title(), release=release, page_index=index, text=text
    )


# ── release identity ────────────────────────────────────────────────


class TestParseRelease:
    @pytest.mark.parametrize(
        "raw, canonical, key",
        [
            ("Release 17.20", "Release 17.20", (17, 20)),
            ("rel 12", "Release 12", (12,)),
            ("R17.2", "Release 17.2", (17, 2)),
            ("release 9.0.1", "Release 9.0.1", (9, 0, 1)),
            ("the Release 07 docs", "Release 7", (7,)),
        ],
    )
    def test_surface_variants_normalize(self, raw, canonical, key):
        release = parse_release(raw)
        assert release.canonical == canonical
        assert release.ordering_key == key
        assert release.raw == raw

    def test_no_numeric_component_rejected(self):
        with pytest.raises(ValueError):
            parse_release("latest")

    def test_ordering_is_numeric_not_lexicographic(self):
        keys = [parse_release(t).ordering_key for t in ("Release 9", "Release 17.2", "Release 17.20")]
        assert keys == sorted(keys)

    def test_slug_is_filesystem_safe(self):
        assert release_slug(parse_release("Release 17.20")) == "release-17-20"


# ── vector store ────────────────────────────────────────────────────


class TestVectorStore:
    def test_from_vectors_round_trip(self):
        store = VectorStore.from_vectors(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
        assert len(store) == 2
        assert store.dim == 2
        assert store.ids == ("a", "b")

    def test_matrix_is_read_only(self):
        store = VectorStore.from_vectors(["a"], [[1.0]])
        with pytest.raises(ValueError):
            store.matrix[0, 0] = 9.0

    def test_id_count_must_match_rows(self):
        with pytest.raises(ValueError):
            VectorStore(["a", "b"], np.zeros((1, 4), dtype=np.float32))

    def test_inconsistent_vector_dims_rejected(self):
        with pytest.raises(ValueError):
            VectorStore.from_vectors(["a", "b"], [[1.0], [1.0, 2.0]])


# ── on-disk layout ──────────────────────────────────────────────────


def small_corpus():
    pages = [page("d", 0, "alpha " * 40), page("d", 1, "beta " * 40)]
    search, context = dual_chunk(pages, k=2, ps=50)
    vectors = [[float(i), float(i) + 0.5] for i in range(len(search))]
    store = VectorStore.from_vectors([c.id for c in search], vectors)
    manifest = {"release": "Release 12", "scheme": "dual", "k": 2, "ps": 50}
    return manifest, search, context, store


class TestCorpusPersistence:
    def test_round_trip_preserves_everything(self, tmp_path):
        manifest, search, context, store = small_corpus()
        write_corpus(tmp_path, manifest, search, context, store)
        handle = load_corpus(tmp_path)
        assert handle.manifest == manifest
        assert handle.search_chunks == search
        assert handle.context_chunks == context
        assert handle.store.ids == store.ids
        assert np.array_equal(handle.store.matrix, store.matrix)

    def test_embeddings_are_row_major_little_endian_f32(self, tmp_path):
        manifest, search, context, store = small_corpus()
        write_corpus(tmp_path, manifest, search, context, store)
        blob = (tmp_path / "embeddings.f32").read_bytes()
        expected = np.ascontiguousarray(store.matrix, dtype="<f4").tobytes(order="C")
        assert blob == expected
        sidecar = json.loads((tmp_path / "embeddings.json").read_text())
        assert sidecar == {"rows": len(store), "dim": store.dim}

    def test_store_ids_must_match_chunk_ids(self, tmp_path):
        manifest, search, context, store = small_corpus()
        wrong = VectorStore.from_vectors(["x"] * len(store), store.matrix.tolist())
        with pytest.raises(ValueError):
            write_corpus(tmp_path, manifest, search, context, wrong)

    def test_truncated_blob_detected(self, tmp_path):
        manifest, search, context, store = small_corpus()
        write_corpus(tmp_path, manifest, search, context, store)
        blob_path = tmp_path / "embeddings.f32"
        blob_path.write_bytes(blob_path.read_bytes()[:-4])
        with pytest.raises(CorpusFormatError):
            load_corpus(tmp_path)

    def test_row_count_mismatch_detected(self, tmp_path):
        manifest, search, context, store = small_corpus()
        write_corpus(tmp_path, manifest, search, context, store)
        sidecar_path = tmp_path / "embeddings.json"
        blob_path = tmp_path / "embeddings.f32"
        rows = len(store) - 1
        sidecar_path.write_text(json.dumps({"rows": rows, "dim": store.dim}))
        blob_path.write_bytes(blob_path.read_bytes()[: rows * store.dim * 4])
        with pytest.raises(CorpusFormatError):
            load_corpus(tmp_path)

    def test_missing_manifest_detected(self, tmp_path):
        with pytest.raises(CorpusFormatError):
            load_corpus(tmp_path)

    def test_dual_scheme_maps_search_to_page_context(self, tmp_path):
        manifest, search, context, store = small_corpus()
        write_corpus(tmp_path, manifest, search, context, store)
        handle = load_corpus(tmp_path)
        assert handle.context_for("d:0:1").id == "d:0"
        assert handle.context_for("d:1:0").id == "d:1"

    def test_single_scheme_maps_identically(self, tmp_path):
        from mrrag.pipeline import build_baseline_corpus

        # single-granularity corpora pair chunks one-to-one under the same id
        search, context = build_baseline_corpus([page("d", 0, "alpha " * 300)], cap=500)
        store = VectorStore.from_vectors(
            [c.id for c in search], [[float(i)] for i in range(len(search))]
        )
        manifest = {"release": "Release 12", "scheme": "single", "cap": 500, "overlap": 0.25}
        write_corpus(tmp_path, manifest, search, context, store)
        handle = load_corpus(tmp_path)
        assert handle.context_for("d:0:1").id == "d:0:1"
        assert handle.context_for("d:0:0").text == search[0].text


# ── embed_corpus ────────────────────────────────────────────────────


class _DriftingBackend:
    """Embeds each batch at a different dimension."""

    def __init__(self):
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        dim = 4 if self.calls == 1 else 5
        return [[0.0] * dim for _ in texts]

    def chat(self, request):
        raise NotImplementedError


class TestEmbedCorpus:
    def test_rows_line_up_with_chunks(self):
        search, _ = dual_chunk([page("d", 0, "alpha beta gamma delta")], k=2)
        store = embed_corpus(search, MockBackend(BackendScript()))
        assert store.ids == tuple(c.id for c in search)
        assert store.dim == 256

    def test_dimension_drift_across_batches_rejected(self):
        search, _ = dual_chunk([page("d", 0, "word " * 8)], k=4)
        with pytest.raises(BackendError):
            embed_corpus(search, _DriftingBackend(), batch_size=2)


# ── registry ────────────────────────────────────────────────────────


class TestRegistry:
    def test_register_and_resolve_variants(self, tmp_path):
        registry = Registry(tmp_path)
        registry.register(parse_release("Release 12"))
        for variant in ("Release 12", "rel 12", "R12", "12"):
            assert registry.resolve(variant).canonical == "Release 12"

    def test_duplicate_registration_rejected(self, tmp_path):
        registry = Registry(tmp_path)
        registry.register(parse_release("Release 12"))
        with pytest.raises(RegistryError):
            registry.register(parse_release("R12"))

    def test_overwrite_allows_reregistration(self, tmp_path):
        registry = Registry(tmp_path)
        registry.register(parse_release("Release 12"))
        root = registry.register(parse_release("Release 12"), overwrite=True)
        assert root.exists()

    def test_releases_sorted_by_ordering_key(self, tmp_path):
        registry = Registry(tmp_path)
        for name in ("Release 17.20", "Release 9", "Release 17.2"):
            registry.register(parse_release(name))
        assert [r.canonical for r in registry.releases()] == [
            "Release 9",
            "Release 17.2",
            "Release 17.20",
        ]
        assert registry.latest().canonical == "Release 17.20"

    def test_unknown_release_raises(self, tmp_path):
        registry = Registry(tmp_path)
        registry.register(parse_release("Release 12"))
        with pytest.raises(UnknownReleaseError):
            registry.resolve("Release 99")
        with pytest.raises(UnknownReleaseError):
            registry.resolve("not a release")

    def test_empty_registry(self, tmp_path):
        registry = Registry(tmp_path)
        assert registry.is_empty()
        assert registry.releases() == []
        with pytest.raises(RegistryError):
            registry.latest()

    def test_persistence_across_instances(self, tmp_path):
        Registry(tmp_path).register(parse_release("Release 12"))
        again = Registry(tmp_path)
        assert not again.is_empty()
        assert again.resolve("12").canonical == "Release 12"

    def test_data_dirs_are_isolated(self, tmp_path):
        Registry(tmp_path / "a").register(parse_release("Release 12"))
        assert Registry(tmp_path / "b").is_empty()


# ── build + ingest ──────────────────────────────────────────────────


class TestBuildCorpus:
    def test_builds_both_schemes(self, tmp_path):
        registry = Registry(tmp_path)
        backend = MockBackend(BackendScript())
        pages = [page("d", 0, "alpha beta " * 30), page("d", 1, "gamma delta " * 30)]
        manifests = build_corpus(R12, pages, backend, registry, embedding_model_id="hash")
        assert set(manifests) == {"dual", "single"}
        root = registry.corpus_root("Release 12")
        assert (root / "dual" / "manifest.json").exists()
        assert (root / "single" / "manifest.json").exists()
        assert registry.open_corpus("Release 12", "dual").scheme == "dual"
        assert registry.open_corpus("Release 12", "single").scheme == "single"

    def test_manifest_carries_scheme_parameters(self, tmp_path):
        registry = Registry(tmp_path)
        backend = MockBackend(BackendScript())
        pages = [page("d", 0, "alpha beta " * 30)]
        manifests = build_corpus(
            R12, pages, backend, registry, k=3, ps=123, cap=500, overlap=0.2
        )
        dual = manifests["dual"].to_dict()
        single = manifests["single"].to_dict()
        assert (dual["k"], dual["ps"]) == (3, 123)
        assert "cap" not in dual
        assert (single["cap"], single["overlap"]) == (500, 0.2)
        assert "k" not in single

    def test_foreign_pages_rejected(self, tmp_path):
        registry = Registry(tmp_path)
        backend = MockBackend(BackendScript())
        pages = [page("d", 0, "text", release=parse_release("Release 13"))]
        with pytest.raises(CorpusBuildError):
            build_corpus(R12, pages, backend, registry)

    def test_failed_build_registers_nothing(self, tmp_path):
        registry = Registry(tmp_path)
        pages = [page("d", 0, "alpha " * 200)]

        class FailingBackend:
            def embed(self, texts):
                raise BackendError("down")

            def chat(self, request):
                raise NotImplementedError

        with pytest.raises(BackendError):
            build_corpus(R12, pages, FailingBackend(), registry)
        assert registry.is_empty()
        leftovers = [p for p in (tmp_path / "corpora").glob(".build-*")] if (
            tmp_path / "corpora"
        ).exists() else []
        assert leftovers == []

    def test_all_pages_empty_rejected(self, tmp_path):
        registry = Registry(tmp_path)
        backend = MockBackend(BackendScript())
        with pytest.raises(CorpusBuildError):
            build_corpus(R12, [page("d", 0, "")], backend, registry)


class TestIngestFixtures:
    """The checked-in two-release fixture corpus, ingested by conftest."""

    def test_both_releases_registered(self, registry):
        assert [r.canonical for r in registry.releases()] == ["Release 12", "Release 17.20"]

    def test_structured_doc_pages_cleaned_and_numbered(self, registry):
        corpus = registry.open_corpus("Release 12", "dual")
        node_ops = [c for c in corpus.context_chunks if c.doc_id == "node-ops"]
        # page 3 is boilerplate-only: no chunk, but numbering untouched
        assert [c.page_index for c in node_ops] == [0, 1, 2]
        assert all("Copyright" not in c.text for c in node_ops)

    def test_table_linearized_into_page_text(self, registry):
        corpus = registry.open_corpus("Release 12", "dual")
        dashboard = corpus.context_chunk("node-ops:1")
        assert "dashboard 8443" in dashboard.text
        assert "metrics 9100" in dashboard.text

    def test_plain_text_doc_split_on_page_break(self, registry):
        corpus = registry.open_corpus("Release 12", "dual")
        storage = [c for c in corpus.context_chunks if c.doc_id == "storage-admin"]
        assert [c.page_index for c in storage] == [0, 1, 2]
        assert "===PAGE===" not in "".join(c.text for c in storage)

    def test_release_facts_stay_in_their_corpus(self, registry):
        r12 = registry.open_corpus("Release 12", "dual")
        r1720 = registry.open_corpus("Release 17.20", "dual")
        r12_text = " ".join(c.text for c in r12.context_chunks)
        r1720_text = " ".join(c.text for c in r1720.context_chunks)
        assert "blue console" in r12_text and "blue console" not in r1720_text
        assert "green console" in r1720_text and "green console" not in r12_text

    def test_select_corpus_defaults_to_latest(self, registry):
        assert select_corpus(None, registry).release == "Release 17.20"
        assert select_corpus("rel 12", registry).release == "Release 12"

    def test_descriptor_loading_validates(self, tmp_path):
        (tmp_path / "docs.json").write_text('[{"doc_id": "d"}]')
        with pytest.raises(CorpusBuildError):
            load_descriptors(tmp_path)

    def test_missing_descriptor_rejected(self, tmp_path):
        with pytest.raises(CorpusBuildError):
            load_descriptors(tmp_path)

    def test_plain_text_without_page_break_falls_back_to_windows(self, tmp_path, fixtures_dir):
        (tmp_path / "docs.json").write_text(
            json.dumps(
                [{"doc_id": "d", "title": "D", "file": "d.txt", "release": "Release 12"}]
            )
        )
        (tmp_path / "d.txt").write_text("x" * 250)
        descriptors = load_descriptors(tmp_path)
        pages = pages_from_file(descriptors[0], tmp_path, [], fallback_page_chars=100)
        assert [len(p.text) for p in pages] == [100, 100, 50]

    def test_unknown_release_has_no_documents(self, tmp_path):
        registry = Registry(tmp_path)
        backend = MockBackend(BackendScript())
        from tests.conftest import DOCS_DIR

        with pytest.raises(CorpusBuildError):
            ingest_release(
                "Release 99",
                DOCS_DIR,
                backend,
                registry,
                strip_patterns=list(DEFAULT_STRIP_PATTERNS),
            )

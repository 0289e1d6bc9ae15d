"""Operator command line: ingest, chat, serve, eval.

Exit codes: 0 success, 1 runtime failure, 2 validation failure. The
effective configuration (file plus environment plus flags) is echoed to
stderr at startup so runs are reproducible from their logs alone.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from mrrag.backend import BackendError
from mrrag.config import AppConfig, ConfigError, load_config
from mrrag.corpus.build import CorpusBuildError
from mrrag.corpus.releases import RegistryError, UnknownReleaseError
from mrrag.engine import Engine
from mrrag.evalsuite.benchmark import FixedClock, load_dataset, load_labels, run_benchmark
from mrrag.pipeline import PipelineConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2

ABLATION_STEPS = ("rewrite", "dualchunk", "reduce", "select")


def system_config(name: str, config: AppConfig) -> PipelineConfig:
    """Pipeline configuration for a --system argument.

    ``full`` enables every step; ``baseline`` is the conventional
    single-granularity pipeline (rewriting and selection on, windows
    instead of dual chunks, no reduction); ``ablation:<steps>`` enables
    only the named steps (comma or plus separated), with ``base`` the
    empty ablation.
    """
    cfg = config.pipeline_config()
    if name == "full":
        flags = dict(
            enable_rewrite=True, enable_dual_chunk=True, enable_reduce=True, enable_select=True
        )
        baseline_mode = False
    elif name == "baseline":
        flags = dict(
            enable_rewrite=True, enable_dual_chunk=False, enable_reduce=False, enable_select=True
        )
        baseline_mode = True
    elif name == "base" or name.startswith("ablation:"):
        requested = () if name == "base" else tuple(
            part
            for part in name.split(":", 1)[1].replace("+", ",").split(",")
            if part and part != "base"
        )
        for part in requested:
            if part not in ABLATION_STEPS:
                raise ValueError(f"unknown ablation step {part!r}")
        flags = {f"enable_{step}": False for step in ("rewrite", "dual_chunk", "reduce", "select")}
        for part in requested:
            flags["enable_dual_chunk" if part == "dualchunk" else f"enable_{part}"] = True
        baseline_mode = False
    else:
        raise ValueError(f"unknown system {name!r}")
    return PipelineConfig(
        k=cfg.k,
        ps=cfg.ps,
        retrieval=cfg.retrieval,
        top_m=cfg.top_m,
        baseline_mode=baseline_mode,
        baseline_chunk_cap=cfg.baseline_chunk_cap,
        baseline_overlap=cfg.baseline_overlap,
        abstention_phrase=cfg.abstention_phrase,
        **flags,
    )


def _echo_config(config: AppConfig) -> None:
    print(f"config: {json.dumps(config.to_dict(), sort_keys=True)}", file=sys.stderr)


def cmd_ingest(args, config: AppConfig) -> int:
    if args.k is not None:
        config.corpus.k = args.k
    if args.ps is not None:
        config.corpus.ps = args.ps
    _echo_config(config)
    engine = Engine(config)
    try:
        manifests = engine.ingest(args.release, args.docs, overwrite=args.overwrite)
    except (CorpusBuildError, RegistryError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BackendError as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for scheme, manifest in manifests.items():
        print(
            f"{manifest.release} [{scheme}]: {manifest.doc_count} docs, "
            f"{manifest.page_count} pages, {manifest.search_chunk_count} search chunks, "
            f"dim {manifest.embedding_dim}"
        )
    return EXIT_OK


def cmd_chat(args, config: AppConfig) -> int:
    _echo_config(config)
    try:
        engine = Engine(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not engine.has_corpora():
        print("error: no corpora registered; run ingest first", file=sys.stderr)
        return EXIT_VALIDATION
    session = engine.new_session(args.release)
    while True:
        try:
            query = input("> ")
        except (EOFError, KeyboardInterrupt):
            print()
            return EXIT_OK
        if not query.strip():
            continue
        answer = engine.answer(session, query)
        print(answer.text)
        if answer.sources:
            print("Sources:")
            for title, page in answer.sources:
                print(f"  - {title}, page {page + 1}")
        if args.verbose:
            if answer.standalone_queries is not None:
                print(f"Base: {answer.standalone_queries.base}")
                print(f"Filtered: {answer.standalone_queries.filtered}")
                if answer.standalone_queries.versionless is not None:
                    print(f"Versionless: {answer.standalone_queries.versionless}")
            if answer.timings:
                rendered = ", ".join(f"{k} {v:.1f}ms" for k, v in answer.timings.items())
                print(f"Timings: {rendered} (total {answer.total_ms:.1f}ms)")
        if answer.error is not None and answer.error_step is not None:
            print(f"error at {answer.error_step}: {answer.error}", file=sys.stderr)


def cmd_serve(args, config: AppConfig) -> int:
    import uvicorn

    from mrrag.service import create_app

    if args.host is not None:
        config.service.host = args.host
    if args.port is not None:
        config.service.port = args.port
    _echo_config(config)
    try:
        engine = Engine(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    app = create_app(
        engine,
        reports_dir=config.service.reports_dir,
        session_ttl_hours=config.service.session_ttl_hours,
        cors_origins=config.service.cors_origins,
        request_log=config.service.request_log or None,
    )
    try:
        uvicorn.run(app, host=config.service.host, port=config.service.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: server failed to start: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_eval(args, config: AppConfig) -> int:
    _echo_config(config)
    try:
        engine = Engine(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not engine.has_corpora():
        print("error: no corpora registered; run ingest first", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        dataset = load_dataset(args.dataset)
        labels = load_labels(args.labels) if args.labels else None
        system_names = args.system or ["full"]
        systems = {name: system_config(name, config) for name in system_names}
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = args.out or f"{config.service.reports_dir}/eval"
    clock = FixedClock() if args.fixed_clock else None
    wall_time = (lambda: 0.0) if args.fixed_clock else None
    try:
        report = run_benchmark(
            dataset,
            systems,
            args.runs,
            engine.registry,
            engine.backend,
            labels=labels,
            out_dir=out_dir,
            clock=clock,
            wall_time=wall_time,
            jobs=args.jobs,
        )
    except BackendError as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name, summary in report["systems"].items():
        means = ", ".join(
            f"{metric}={value:.3f}" if value is not None else f"{metric}=n/a"
            for metric, value in summary["metric_means"].items()
        )
        print(f"{name}: {means} [errors {summary['errors']}]")
    print(f"report written to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrrag", description="Release-aware documentation assistant."
    )
    parser.add_argument("--config", help="path to JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="build and register one release's corpora")
    p_ingest.add_argument("--release", required=True, help='release name, e.g. "Release 17.20"')
    p_ingest.add_argument("--docs", required=True, help="directory holding docs.json and files")
    p_ingest.add_argument("--overwrite", action="store_true", help="replace an existing corpus")
    p_ingest.add_argument("--k", type=int, help="search chunks per page")
    p_ingest.add_argument("--ps", type=int, help="context padding size in characters")
    p_ingest.set_defaults(func=cmd_ingest)

    p_chat = sub.add_parser("chat", help="interactive question loop")
    p_chat.add_argument("--release", help="pin every question to this release")
    p_chat.add_argument("--verbose", action="store_true", help="show rewrites and timings")
    p_chat.set_defaults(func=cmd_chat)

    p_serve = sub.add_parser("serve", help="run the HTTP API")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.set_defaults(func=cmd_serve)

    p_eval = sub.add_parser("eval", help="run the benchmark over configured systems")
    p_eval.add_argument("--dataset", required=True, help="JSONL of qa pairs")
    p_eval.add_argument("--runs", type=int, default=1, help="repetitions per system")
    p_eval.add_argument(
        "--system",
        action="append",
        help="full | baseline | base | ablation:<steps>; repeatable, first is the reference",
    )
    p_eval.add_argument("--labels", help="JSONL of human adequacy labels")
    p_eval.add_argument("--out", help="report output directory")
    p_eval.add_argument("--fixed-clock", action="store_true", help="deterministic timings")
    p_eval.add_argument("--jobs", type=int, default=1, help="concurrent metric scoring")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args, config)
    except UnknownReleaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

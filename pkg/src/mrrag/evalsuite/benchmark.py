"""Benchmark harness: repeated runs, metric aggregation, comparisons.

Each configured system answers every dataset question ``runs`` times with
a fresh session per question. Every answered record is scored with the six
judge metrics; per-run means feed rank statistics comparing the first
listed system against each of the others. Reports are written as
``report.json`` (everything), ``report.csv`` (per-metric means), and
``runs.jsonl`` (one scored record per line), and are byte-identical across
invocations when driven by a fixed clock and a scripted backend.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from mrrag import pipeline
from mrrag.backend import ChatBackend
from mrrag.evalsuite.metrics import METRIC_NAMES, MetricScores, score_answer
from mrrag.evalsuite.stats import pearson, vargha_delaney_a12, wilcoxon_rank_sum
from mrrag.pipeline import Answer, ChatSession, PipelineConfig

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
RUNS_FILE = "runs.jsonl"

SIGNIFICANCE_LEVEL = 0.01
MIN_RUNS_FOR_STATS = 2


class FixedClock:
    """Deterministic stand-in for perf counters: advances a step per call."""

    def __init__(self, start: float = 0.0, step: float = 0.001):
        self._now = start
        self._step = step

    def __call__(self) -> float:
        self._now += self._step
        return self._now


@dataclass(frozen=True)
class QAPair:
    id: str
    question: str
    ground_truth: str
    release: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("qa pair needs an id")
        if not self.question.strip():
            raise ValueError(f"{self.id}: question must be non-empty")
        if not self.ground_truth.strip():
            raise ValueError(f"{self.id}: ground truth must be non-empty")


@dataclass
class RunRecord:
    qa_id: str
    run_index: int
    answer: Answer
    c_q: list[str] = field(default_factory=list)
    scores: MetricScores | None = None


@dataclass(frozen=True)
class StatComparison:
    metric: str
    p_value: float
    a12: float
    magnitude: str

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "p_value": self.p_value,
            "a12": self.a12,
            "magnitude": self.magnitude,
            "significant": self.significant,
        }


def load_dataset(path: str | Path) -> list[QAPair]:
    pairs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            pairs.append(
                QAPair(
                    id=raw["id"],
                    question=raw["question"],
                    ground_truth=raw["ground_truth"],
                    release=raw.get("release"),
                )
            )
    if not pairs:
        raise ValueError(f"dataset {path} holds no qa pairs")
    return pairs


def load_labels(path: str | Path) -> dict[str, float]:
    """Human adequacy labels: JSONL of {qa_id, label} with label in {0, 1}."""
    labels = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            labels[raw["qa_id"]] = float(raw["label"])
    return labels


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _execute_system(
    name: str,
    cfg: PipelineConfig,
    dataset: list[QAPair],
    runs: int,
    registry,
    backend: ChatBackend,
    clock,
) -> list[RunRecord]:
    scheme = "dual" if cfg.enable_dual_chunk else "single"
    records = []
    for run_index in range(runs):
        for qa in dataset:
            session = ChatSession()
            answer = pipeline.answer(
                qa.question, session, registry, cfg, backend, clock=clock
            )
            c_q: list[str] = []
            if answer.error is None and answer.release is not None:
                corpus = registry.open_corpus(answer.release, scheme)
                c_q = [corpus.context_chunk(cid).text for cid in answer.used_chunks]
            if answer.error is not None:
                logger.warning(
                    "%s: %s run %d failed at %s: %s",
                    name,
                    qa.id,
                    run_index,
                    answer.error_step,
                    answer.error,
                )
            records.append(RunRecord(qa.id, run_index, answer, c_q))
    return records


def _score_records(
    records: list[RunRecord],
    dataset: list[QAPair],
    judge: ChatBackend,
    jobs: int,
) -> None:
    by_id = {qa.id: qa for qa in dataset}
    scorable = [r for r in records if r.answer.error is None]

    def score(record: RunRecord) -> MetricScores:
        qa = by_id[record.qa_id]
        return score_answer(qa.question, record.answer.text, qa.ground_truth, record.c_q, judge)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(score, scorable))
    else:
        results = [score(r) for r in scorable]
    for record, scores in zip(scorable, results):
        record.scores = scores


def _per_run_means(records: list[RunRecord], runs: int) -> dict[str, list[float | None]]:
    means: dict[str, list[float | None]] = {m: [] for m in METRIC_NAMES}
    for run_index in range(runs):
        run_scores = [
            r.scores for r in records if r.run_index == run_index and r.scores is not None
        ]
        for metric in METRIC_NAMES:
            defined = [
                getattr(s, metric) for s in run_scores if getattr(s, metric) is not None
            ]
            means[metric].append(_mean(defined))
    return means


def _timing_means(records: list[RunRecord]) -> dict[str, float]:
    ok = [r for r in records if r.answer.error is None]
    if not ok:
        return {}
    steps: dict[str, list[float]] = {}
    for record in ok:
        for step, ms in record.answer.timings.items():
            steps.setdefault(step, []).append(ms)
    timings = {step: sum(ms) / len(ms) for step, ms in sorted(steps.items())}
    timings["total"] = sum(r.answer.total_ms for r in ok) / len(ok)
    return timings


def _compare(
    reference: dict[str, list[float | None]],
    candidate: dict[str, list[float | None]],
) -> list[StatComparison]:
    comparisons = []
    for metric in METRIC_NAMES:
        xs = [v for v in reference[metric] if v is not None]
        ys = [v for v in candidate[metric] if v is not None]
        if len(xs) < MIN_RUNS_FOR_STATS or len(ys) < MIN_RUNS_FOR_STATS:
            continue
        p = wilcoxon_rank_sum(xs, ys)
        a12, magnitude = vargha_delaney_a12(xs, ys)
        comparisons.append(StatComparison(metric, p, a12, magnitude))
    return comparisons


def _label_correlations(
    records: list[RunRecord], labels: dict[str, float]
) -> dict[str, float | None]:
    """Pearson between first-run metric scores and human adequacy labels."""
    first_run = [r for r in records if r.run_index == 0 and r.scores is not None]
    correlations: dict[str, float | None] = {}
    for metric in METRIC_NAMES:
        xs = []
        ys = []
        for record in first_run:
            value = getattr(record.scores, metric)
            if value is not None and record.qa_id in labels:
                xs.append(value)
                ys.append(labels[record.qa_id])
        correlations[metric] = pearson(xs, ys) if len(xs) >= 2 else None
    return correlations


def run_benchmark(
    dataset: list[QAPair],
    systems: dict[str, PipelineConfig],
    runs: int,
    registry,
    backend: ChatBackend,
    judge: ChatBackend | None = None,
    labels: dict[str, float] | None = None,
    out_dir: str | Path | None = None,
    clock=None,
    wall_time=None,
    jobs: int = 1,
) -> dict:
    """Run every system, score every record, and assemble the report.

    The first system listed is the reference side of every statistical
    comparison. Statistics need at least two runs per side; single-run
    benchmarks report means only.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not systems:
        raise ValueError("at least one system required")
    judge = judge if judge is not None else backend
    clock = clock if clock is not None else time.perf_counter
    wall_time = wall_time if wall_time is not None else time.time

    all_records: dict[str, list[RunRecord]] = {}
    report_systems: dict[str, dict] = {}
    for name, cfg in systems.items():
        records = _execute_system(name, cfg, dataset, runs, registry, backend, clock)
        _score_records(records, dataset, judge, jobs)
        per_run = _per_run_means(records, runs)
        overall = {
            metric: _mean([v for v in values if v is not None])
            for metric, values in per_run.items()
        }
        report_systems[name] = {
            "flags": cfg.flags(),
            "metric_means": overall,
            "per_run_means": per_run,
            "errors": sum(1 for r in records if r.answer.error is not None),
            "timings_ms": _timing_means(records),
        }
        all_records[name] = records

    names = list(systems)
    comparisons = []
    if runs >= MIN_RUNS_FOR_STATS:
        for other in names[1:]:
            rows = _compare(
                report_systems[names[0]]["per_run_means"],
                report_systems[other]["per_run_means"],
            )
            comparisons.append(
                {
                    "reference": names[0],
                    "candidate": other,
                    "metrics": [c.to_dict() for c in rows],
                }
            )

    report = {
        "generated_at": wall_time(),
        "dataset_size": len(dataset),
        "runs": runs,
        "systems": report_systems,
        "comparisons": comparisons,
    }
    if labels:
        report["label_correlations"] = _label_correlations(all_records[names[0]], labels)

    if out_dir is not None:
        write_report(report, all_records, out_dir)
    return report


def _record_to_dict(system: str, record: RunRecord) -> dict:
    return {
        "system": system,
        "qa_id": record.qa_id,
        "run_index": record.run_index,
        "answer": dataclasses.asdict(record.answer),
        "c_q": record.c_q,
        "scores": record.scores.as_dict() if record.scores is not None else None,
    }


def write_report(
    report: dict, all_records: dict[str, list[RunRecord]], out_dir: str | Path
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / REPORT_JSON).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (out_dir / REPORT_CSV).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system", *METRIC_NAMES, "errors"])
        for name, summary in report["systems"].items():
            row = [name]
            for metric in METRIC_NAMES:
                value = summary["metric_means"][metric]
                row.append("" if value is None else f"{value:.6f}")
            row.append(str(summary["errors"]))
            writer.writerow(row)
    with (out_dir / RUNS_FILE).open("w", encoding="utf-8") as fh:
        for name, records in all_records.items():
            for record in records:
                fh.write(json.dumps(_record_to_dict(name, record), sort_keys=True) + "\n")

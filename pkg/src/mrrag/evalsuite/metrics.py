"""Judge-based answer quality metrics.

Six scores per answered question: correctness (a panel of eight verdict
prompts in four groups), answer relevancy, faithfulness, contextual
precision, contextual recall, and contextual relevancy. All ratio metrics
are B/A counts over a judge's per-item classification vector; the metric
code only counts, it never re-derives a classification. A ratio with no
items (A = 0) is undefined and reported as None so aggregation can skip
it.

The judge is any chat backend. A judge that replies with the literal
``[sentence-split]`` sentinel delegates statement extraction to a
deterministic local sentence splitter, which keeps fully scripted runs
reproducible without scripting every extraction.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, fields

from mrrag.backend import ChatBackend, ChatMessage, ChatRequest
from mrrag.prompts import render_prompt

logger = logging.getLogger(__name__)

JUDGE_TAG = "judge"
NO_ANSWER_MARKER = "[no answer]"
SENTENCE_SPLIT_SENTINEL = "[sentence-split]"

CORRECTNESS_PROMPTS = (
    "correctness_factual_1",
    "correctness_factual_2",
    "correctness_units_1",
    "correctness_units_2",
    "correctness_meaning_1",
    "correctness_meaning_2",
    "correctness_scope_1",
    "correctness_scope_2",
)

_SENTENCE_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+")
_LEADING_MARKER_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_VERDICT_RE = re.compile(r"\b(relevant|irrelevant|correct|incorrect)\b", re.IGNORECASE)


@dataclass
class MetricScores:
    """One answer's metric values; None marks an undefined score."""

    answer_correctness: float | None = None
    answer_relevancy: float | None = None
    answer_faithfulness: float | None = None
    contextual_precision: float | None = None
    contextual_recall: float | None = None
    contextual_relevancy: float | None = None

    def __post_init__(self) -> None:
        for value in self.as_dict().values():
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"metric value {value} outside [0, 1]")

    def as_dict(self) -> dict[str, float | None]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRIC_NAMES = tuple(f.name for f in fields(MetricScores))


def _judge(backend: ChatBackend, prompt: str) -> str:
    request = ChatRequest(messages=[ChatMessage("user", prompt)], tag=JUDGE_TAG)
    return backend.chat(request)


def split_sentences(text: str) -> list[str]:
    """Deterministic fallback splitter: one statement per sentence."""
    parts = _SENTENCE_BOUNDARY_RE.split(text.strip())
    return [p.strip() for p in parts if p.strip()]


def extract_statements(text: str, backend: ChatBackend) -> list[str]:
    """Split text into atomic statements via the judge.

    Empty text yields no statements without a judge call.
    """
    if not text.strip():
        return []
    response = _judge(backend, render_prompt("judge/statements", text=text))
    if response.strip() == SENTENCE_SPLIT_SENTINEL:
        return split_sentences(text)
    statements = []
    for line in response.splitlines():
        cleaned = _LEADING_MARKER_RE.sub("", line).strip()
        if cleaned:
            statements.append(cleaned)
    return statements


def _numbered(items: list[str]) -> str:
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, 1))


def _parse_verdicts(response: str, count: int) -> list[bool] | None:
    """Map a judge reply onto ``count`` booleans, or None when unparseable.

    One verdict per item is expected; a single verdict against several
    items broadcasts (judges answering for "all statements" at once).
    """
    found = [
        w.lower() in ("relevant", "correct") for w in _VERDICT_RE.findall(response)
    ]
    if len(found) == count:
        return found
    if len(found) == 1 and count > 1:
        return found * count
    return None


def classify_items(
    items: list[str],
    prompt_name: str,
    backend: ChatBackend,
    items_key: str = "statements",
    **context: str,
) -> list[bool]:
    """Judge-classify each item as positive/negative.

    ``items_key`` names the prompt placeholder the numbered items fill.
    One reprompt on an unparseable reply; still unparseable counts every
    item negative (with a warning) rather than failing the whole record.
    """
    if not items:
        return []
    prompt = render_prompt(prompt_name, **{items_key: _numbered(items)}, **context)
    for attempt in range(2):
        verdicts = _parse_verdicts(_judge(backend, prompt), len(items))
        if verdicts is not None:
            return verdicts
        if attempt == 0:
            logger.warning("unparseable verdicts from %s, reprompting", prompt_name)
    logger.warning("judge verdicts for %s unparseable after reprompt", prompt_name)
    return [False] * len(items)


def _ratio(flags: list[bool]) -> float | None:
    if not flags:
        return None
    return sum(flags) / len(flags)


def answer_correctness(
    question: str, answer: str, ground_truth: str, backend: ChatBackend
) -> float:
    """Fraction of the eight verdict prompts judging the answer correct."""
    correct = 0
    for name in CORRECTNESS_PROMPTS:
        prompt = render_prompt(
            f"judge/{name}", question=question, answer=answer, ground_truth=ground_truth
        )
        verdict = None
        for attempt in range(2):
            reply = _judge(backend, prompt).strip().lower()
            words = [w for w in _VERDICT_RE.findall(reply) if w in ("correct", "incorrect")]
            if len(words) == 1:
                verdict = words[0]
                break
            if attempt == 0:
                logger.warning("unparseable verdict from %s, reprompting", name)
        if verdict is None:
            logger.warning("verdict for %s unparseable after reprompt, counting incorrect", name)
        elif verdict == "correct":
            correct += 1
    return correct / len(CORRECTNESS_PROMPTS)


def answer_relevancy(question: str, answer: str, backend: ChatBackend) -> float | None:
    statements = extract_statements(answer, backend)
    flags = classify_items(
        statements, "judge/classify_answer_relevancy", backend, question=question
    )
    return _ratio(flags)


def answer_faithfulness(answer: str, chunks: list[str], backend: ChatBackend) -> float | None:
    statements = extract_statements(answer, backend)
    if not statements:
        return None
    if not chunks:
        # nothing to ground in: every statement is unsupported
        return 0.0
    flags = classify_items(
        statements, "judge/classify_faithfulness", backend, chunks="\n\n".join(chunks)
    )
    return _ratio(flags)


def precision_from_flags(flags: list[bool]) -> float | None:
    """Rank-weighted precision over an ordered binary relevance vector.

    Each relevant position i contributes (relevant-in-first-i)/i; the sum
    is normalized by the number of relevant items. No items → undefined;
    items but none relevant → 0.
    """
    if not flags:
        return None
    total_relevant = sum(flags)
    if total_relevant == 0:
        return 0.0
    score = 0.0
    seen_relevant = 0
    for i, flag in enumerate(flags, 1):
        if flag:
            seen_relevant += 1
            score += seen_relevant / i
    return score / total_relevant


def contextual_precision(
    chunks: list[str], question: str, ground_truth: str, backend: ChatBackend
) -> float | None:
    if not chunks:
        return None
    flags = classify_items(
        [c if c.strip() else "(empty chunk)" for c in chunks],
        "judge/classify_precision",
        backend,
        items_key="chunks",
        question=question,
        ground_truth=ground_truth,
    )
    return precision_from_flags(flags)


def contextual_recall(ground_truth: str, chunks: list[str], backend: ChatBackend) -> float | None:
    statements = extract_statements(ground_truth, backend)
    if not statements:
        return None
    if not chunks:
        return 0.0
    flags = classify_items(
        statements, "judge/classify_recall", backend, chunks="\n\n".join(chunks)
    )
    return _ratio(flags)


def contextual_relevancy(question: str, chunks: list[str], backend: ChatBackend) -> float | None:
    statements = []
    for chunk in chunks:
        statements.extend(extract_statements(chunk, backend))
    flags = classify_items(
        statements, "judge/classify_contextual_relevancy", backend, question=question
    )
    return _ratio(flags)


def score_answer(
    question: str,
    answer: str,
    ground_truth: str,
    chunks: list[str],
    backend: ChatBackend,
) -> MetricScores:
    """All six metrics for one answered question."""
    return MetricScores(
        answer_correctness=answer_correctness(question, answer, ground_truth, backend),
        answer_relevancy=answer_relevancy(question, answer, backend),
        answer_faithfulness=answer_faithfulness(answer, chunks, backend),
        contextual_precision=contextual_precision(chunks, question, ground_truth, backend),
        contextual_recall=contextual_recall(ground_truth, chunks, backend),
        contextual_relevancy=contextual_relevancy(question, chunks, backend),
    )

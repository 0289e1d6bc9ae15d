"""Metric tests: statement extraction, judge-vector counting, and the
rank-weighted precision score (checked against an exhaustive oracle).
"""

import itertools
from fractions import Fraction

import pytest

from mrrag.backend import ChatBackend
from mrrag.evalsuite.metrics import (
    METRIC_NAMES,
    MetricScores,
    answer_correctness,
    answer_faithfulness,
    answer_relevancy,
    classify_items,
    contextual_precision,
    contextual_recall,
    contextual_relevancy,
    extract_statements,
    precision_from_flags,
    score_answer,
    split_sentences,
)


class _QueueJudge(ChatBackend):
    """Pops scripted replies in call order and records each prompt."""

    def __init__(self, *responses: str):
        self.responses = list(responses)
        self.prompts: list[str] = []

    def chat(self, request) -> str:
        self.prompts.append(request.messages[-1].content)
        return self.responses.pop(0)

    def embed(self, texts):
        raise NotImplementedError


# ── statement extraction ────────────────────────────────────────────


class TestSplitSentences:
    def test_splits_on_terminators(self):
        assert split_sentences("First. Second!  Third?") == ["First.", "Second!", "Third?"]

    def test_single_sentence_stays_whole(self):
        assert split_sentences("The port is 8443.") == ["The port is 8443."]

    def test_blank_text_yields_nothing(self):
        assert split_sentences("   ") == []


class TestExtractStatements:
    def test_empty_text_skips_the_judge(self):
        judge = _QueueJudge()
        assert extract_statements("", judge) == []
        assert judge.prompts == []

    def test_sentinel_falls_back_to_sentence_split(self):
        judge = _QueueJudge("[sentence-split]")
        got = extract_statements("One fact. Another fact.", judge)
        assert got == ["One fact.", "Another fact."]
        assert len(judge.prompts) == 1

    def test_list_markers_are_stripped(self):
        judge = _QueueJudge("- first point\n2) second point\n• third point\n")
        got = extract_statements("anything", judge)
        assert got == ["first point", "second point", "third point"]

    def test_blank_lines_dropped(self):
        judge = _QueueJudge("alpha\n\n   \nbeta")
        assert extract_statements("anything", judge) == ["alpha", "beta"]


# ── judge classification vectors ────────────────────────────────────


class TestClassifyItems:
    def test_one_verdict_per_item(self):
        judge = _QueueJudge("1. relevant\n2. irrelevant\n3. relevant")
        got = classify_items(["a", "b", "c"], "judge/classify_faithfulness", judge, chunks="ctx")
        assert got == [True, False, True]

    def test_single_verdict_broadcasts(self):
        judge = _QueueJudge("relevant")
        got = classify_items(["a", "b", "c"], "judge/classify_faithfulness", judge, chunks="ctx")
        assert got == [True, True, True]

    def test_correct_counts_as_positive(self):
        judge = _QueueJudge("correct\nincorrect")
        got = classify_items(["a", "b"], "judge/classify_faithfulness", judge, chunks="ctx")
        assert got == [True, False]

    def test_count_mismatch_reprompts_once(self):
        judge = _QueueJudge("relevant\nirrelevant", "relevant\nrelevant\nirrelevant")
        got = classify_items(["a", "b", "c"], "judge/classify_faithfulness", judge, chunks="ctx")
        assert got == [True, True, False]
        assert len(judge.prompts) == 2

    def test_two_unparseable_replies_count_all_negative(self):
        judge = _QueueJudge("hmm", "no verdicts here")
        got = classify_items(["a", "b"], "judge/classify_faithfulness", judge, chunks="ctx")
        assert got == [False, False]
        assert len(judge.prompts) == 2

    def test_no_items_skips_the_judge(self):
        judge = _QueueJudge()
        assert classify_items([], "judge/classify_faithfulness", judge, chunks="ctx") == []
        assert judge.prompts == []

    def test_items_are_numbered_in_the_prompt(self):
        judge = _QueueJudge("relevant\nrelevant")
        classify_items(["alpha", "beta"], "judge/classify_faithfulness", judge, chunks="ctx")
        assert "1. alpha" in judge.prompts[0]
        assert "2. beta" in judge.prompts[0]


# ── rank-weighted precision ─────────────────────────────────────────


def oracle_precision(flags):
    total = sum(flags)
    if not flags:
        return None
    if total == 0:
        return Fraction(0)
    score = Fraction(0)
    for i in range(len(flags)):
        if flags[i]:
            score += Fraction(sum(flags[: i + 1]), i + 1)
    return score / total


class TestPrecisionFromFlags:
    def test_agrees_with_oracle_on_every_vector_up_to_length_eight(self):
        for length in range(1, 9):
            for bits in itertools.product([False, True], repeat=length):
                expected = float(oracle_precision(list(bits)))
                got = precision_from_flags(list(bits))
                assert got == pytest.approx(expected, abs=1e-12), bits

    def test_edge_values(self):
        assert precision_from_flags([]) is None
        assert precision_from_flags([False, False]) == 0.0
        assert precision_from_flags([True]) == 1.0
        assert precision_from_flags([True, False]) == 1.0
        assert precision_from_flags([False, True]) == 0.5

    def test_promoting_a_relevant_item_never_lowers_the_score(self):
        import random

        rng = random.Random(19)
        for _ in range(200):
            flags = [rng.random() < 0.5 for _ in range(rng.randrange(2, 9))]
            if not any(flags):
                continue
            base = precision_from_flags(flags)
            for i in range(len(flags) - 1):
                if not flags[i] and flags[i + 1]:
                    swapped = list(flags)
                    swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
                    assert precision_from_flags(swapped) >= base - 1e-12, flags


# ── correctness panel ───────────────────────────────────────────────


class TestAnswerCorrectness:
    def test_unanimous_panel_scores_one(self):
        judge = _QueueJudge(*["correct"] * 8)
        assert answer_correctness("q", "a", "gt", judge) == 1.0
        assert len(judge.prompts) == 8

    def test_split_panel_scores_the_fraction(self):
        judge = _QueueJudge(*(["correct"] * 6 + ["incorrect"] * 2))
        assert answer_correctness("q", "a", "gt", judge) == 0.75

    def test_unparseable_verdict_reprompts_then_counts(self):
        judge = _QueueJudge("maybe?", "correct", *["incorrect"] * 7)
        assert answer_correctness("q", "a", "gt", judge) == 0.125
        assert len(judge.prompts) == 9

    def test_twice_unparseable_counts_incorrect(self):
        judge = _QueueJudge("shrug", "still no verdict", *["correct"] * 7)
        assert answer_correctness("q", "a", "gt", judge) == 0.875

    def test_conflicting_verdict_words_are_unparseable(self):
        judge = _QueueJudge("correct or incorrect", "correct", *["correct"] * 7)
        assert answer_correctness("q", "a", "gt", judge) == 1.0
        assert len(judge.prompts) == 9

    def test_verdict_embedded_in_a_sentence(self):
        judge = _QueueJudge(*["The answer is Correct."] * 8)
        assert answer_correctness("q", "a", "gt", judge) == 1.0


# ── ratio metrics ───────────────────────────────────────────────────


class TestAnswerRelevancy:
    def test_counts_relevant_statements(self):
        judge = _QueueJudge("[sentence-split]", "relevant\nirrelevant")
        got = answer_relevancy("q", "Fact one. Fact two.", judge)
        assert got == 0.5

    def test_empty_answer_is_undefined(self):
        assert answer_relevancy("q", "", _QueueJudge()) is None


class TestAnswerFaithfulness:
    def test_counts_grounded_statements(self):
        judge = _QueueJudge("[sentence-split]", "relevant\nrelevant\nirrelevant")
        got = answer_faithfulness("A. B. C.", ["context"], judge)
        assert got == pytest.approx(2 / 3)

    def test_no_statements_is_undefined_even_without_chunks(self):
        assert answer_faithfulness("", [], _QueueJudge()) is None

    def test_statements_without_chunks_score_zero(self):
        judge = _QueueJudge("[sentence-split]")
        got = answer_faithfulness("A claim.", [], judge)
        assert got == 0.0
        assert len(judge.prompts) == 1  # extraction only, no classification


class TestContextualPrecision:
    def test_rank_weighted_over_chunk_flags(self):
        judge = _QueueJudge("irrelevant\nrelevant")
        got = contextual_precision(["c1", "c2"], "q", "gt", judge)
        assert got == 0.5

    def test_no_chunks_is_undefined(self):
        assert contextual_precision([], "q", "gt", _QueueJudge()) is None

    def test_blank_chunk_is_named_in_the_prompt(self):
        judge = _QueueJudge("relevant\nrelevant")
        contextual_precision(["real text", "   "], "q", "gt", judge)
        assert "(empty chunk)" in judge.prompts[0]


class TestContextualRecall:
    def test_counts_covered_statements(self):
        judge = _QueueJudge("[sentence-split]", "relevant\nirrelevant")
        got = contextual_recall("Fact one. Fact two.", ["context"], judge)
        assert got == 0.5

    def test_empty_ground_truth_is_undefined(self):
        assert contextual_recall("", ["context"], _QueueJudge()) is None

    def test_statements_without_chunks_score_zero(self):
        judge = _QueueJudge("[sentence-split]")
        assert contextual_recall("A fact.", [], judge) == 0.0


class TestContextualRelevancy:
    def test_pools_statements_across_chunks(self):
        judge = _QueueJudge(
            "[sentence-split]", "[sentence-split]", "relevant\nirrelevant\nrelevant"
        )
        got = contextual_relevancy("q", ["A. B.", "C."], judge)
        assert got == pytest.approx(2 / 3)

    def test_no_chunks_is_undefined(self):
        assert contextual_relevancy("q", [], _QueueJudge()) is None


# ── aggregate scoring ───────────────────────────────────────────────


class TestScoreAnswer:
    def test_grounded_answer_scores_full_marks(self, backend):
        scores = score_answer(
            question="Which console starts the upgrade in release 12?",
            answer="The upgrade wizard starts from the blue console.",
            ground_truth="The upgrade wizard starts from the blue console.",
            chunks=["The upgrade wizard starts from the blue console. Upgrades run node by node."],
            backend=backend,
        )
        assert scores.as_dict() == {name: 1.0 for name in METRIC_NAMES}

    def test_abstention_without_chunks(self, backend):
        scores = score_answer(
            question="What is the mascot of the engineering team?",
            answer="I don't know.",
            ground_truth="[no answer]",
            chunks=[],
            backend=backend,
        )
        assert scores.answer_correctness == 1.0
        assert scores.answer_faithfulness == 0.0
        assert scores.contextual_recall == 0.0
        assert scores.contextual_precision is None
        assert scores.contextual_relevancy is None


class TestMetricScores:
    def test_values_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            MetricScores(answer_correctness=1.5)
        with pytest.raises(ValueError):
            MetricScores(contextual_recall=-0.1)

    def test_dict_order_matches_metric_names(self):
        assert tuple(MetricScores().as_dict()) == METRIC_NAMES
        assert METRIC_NAMES == (
            "answer_correctness",
            "answer_relevancy",
            "answer_faithfulness",
            "contextual_precision",
            "contextual_recall",
            "contextual_relevancy",
        )

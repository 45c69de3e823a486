"""Metric tests: the length-score oracle table, judge parsing, aggregation."""

from __future__ import annotations

import json
import random

import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from capweave.gateway import Gateway, MockResponder, mock_backend
from capweave.scoring import (
    DEFAULT_BUCKET_EDGES,
    EvalItem,
    JudgeParseError,
    QualityDims,
    ScoredItem,
    ScoringError,
    aggregate,
    bucket_for,
    count_words,
    length_score,
    load_eval_items,
    quality_score,
    relevance_score,
    score_items,
)

# Hand-evaluated oracle table for the piecewise linear length score:
#   overlong:  100 * max(0, 1 - (l'/l - 1)/3)
#   truncated: 100 * max(0, 1 - (l/l' - 1)/2)
LENGTH_ORACLE = [
    (1000, 1000, 100.0),
    (1000, 2000, 100.0 * (1.0 - 1.0 / 3.0)),  # 66.666...
    (1000, 500, 50.0),
    (1000, 4000, 0.0),
    (1000, 250, 0.0),
]


class CannedResponder(MockResponder):
    """Mock whose replies come from a fixed list; the last one repeats."""

    def __init__(self, replies: list[str]):
        super().__init__(seed="canned")
        self.replies = list(replies)

    def handle(self, prepared, endpoint):
        with self._lock:
            self.transcript.append({"endpoint_id": endpoint.id, "text": prepared.joined_text()})
        return self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]


def canned_judge(*replies: str):
    endpoint = mock_backend("judge", kind="judge")
    endpoint.handler = CannedResponder(list(replies))
    return endpoint


def item(video_id="v", duration=700.0, reference="ref words here", candidate="cand words"):
    return EvalItem(
        video_id=video_id, duration_s=duration,
        reference_caption=reference, candidate_caption=candidate,
    )


class TestCountWords:
    def test_empty(self):
        assert count_words("") == 0

    def test_whitespace_split(self):
        assert count_words("The clip begins with...") == 4

    def test_punctuation_stays_attached(self):
        assert count_words("state-of-the-art model (SOTA)") == 3

    def test_unicode_whitespace(self):
        assert count_words("one two\tthree\nfour") == 4


class TestLengthScore:
    @pytest.mark.parametrize("l,l_prime,expected", LENGTH_ORACLE)
    def test_oracle_table(self, l, l_prime, expected):
        assert abs(length_score(l, l_prime) - expected) < 1e-9

    def test_empty_candidate_scores_zero(self):
        assert length_score(1000, 0) == 0.0

    def test_zero_reference_rejected(self):
        with pytest.raises(ScoringError):
            length_score(0, 100)

    @given(st.integers(min_value=1, max_value=10_000), st.integers(min_value=0, max_value=50_000))
    @settings(max_examples=500)
    def test_range_and_clamps(self, l, l_prime):
        s = length_score(l, l_prime)
        assert 0.0 <= s <= 100.0
        if l_prime >= 4 * l or (l_prime > 0 and l_prime * 3 <= l) or l_prime == 0:
            assert s == 0.0
        if l_prime == l:
            assert s == 100.0

    def test_branch_continuity_at_equal_lengths(self):
        for l in (1, 7, 999, 12345):
            over = 100.0 * max(0.0, 1.0 - (l / l - 1.0) / 3.0)
            under = 100.0 * max(0.0, 1.0 - (l / l - 1.0) / 2.0)
            assert over == under == length_score(l, l) == 100.0

    def test_monotone_decay_each_side(self):
        worse_long = [length_score(1000, lp) for lp in range(1000, 4200, 100)]
        assert all(b <= a for a, b in zip(worse_long, worse_long[1:]))
        worse_short = [length_score(1000, lp) for lp in range(1000, 200, -50)]
        assert all(b <= a for a, b in zip(worse_short, worse_short[1:]))


def quality_reply(scores: dict[str, int]) -> str:
    body = {"Analysis": "canned analysis"}
    body.update(scores)
    return json.dumps(body)


ALL_DIM_KEYS = ["Relevance", "Accuracy", "Coherence", "Clarity",
                "Breadth and Depth", "Reading Experience"]


class TestQualityScore:
    def test_all_fives_gives_100(self):
        judge = canned_judge(quality_reply({k: 5 for k in ALL_DIM_KEYS}))
        dims, s_q = quality_score(item(), judge, Gateway())
        assert s_q == 100.0
        assert dims.values() == [5] * 6

    def test_all_ones_gives_20(self):
        judge = canned_judge(quality_reply({k: 1 for k in ALL_DIM_KEYS}))
        _, s_q = quality_score(item(), judge, Gateway())
        assert s_q == 20.0

    def test_mixed_dims_mean(self):
        scores = dict(zip(ALL_DIM_KEYS, [5, 4, 4, 3, 5, 4]))
        judge = canned_judge(quality_reply(scores))
        dims, s_q = quality_score(item(), judge, Gateway())
        assert abs(s_q - 20.0 * 25.0 / 6.0) < 1e-9  # 83.33...

    def test_reask_recovers_from_garbage(self):
        good = quality_reply({k: 3 for k in ALL_DIM_KEYS})
        judge = canned_judge("not json at all", good)
        _, s_q = quality_score(item(), judge, Gateway())
        assert s_q == 60.0
        assert len(judge.handler.transcript) == 2
        assert "Reminder" in judge.handler.transcript[1]["text"]

    def test_missing_dimension_fails_after_reask(self):
        partial = quality_reply({k: 3 for k in ALL_DIM_KEYS[:-1]})
        judge = canned_judge(partial)
        with pytest.raises(JudgeParseError):
            quality_score(item(), judge, Gateway())
        assert len(judge.handler.transcript) == 2

    def test_out_of_range_dimension_fails_after_reask(self):
        bad = quality_reply({**{k: 3 for k in ALL_DIM_KEYS}, "Clarity": 6})
        judge = canned_judge(bad)
        with pytest.raises(JudgeParseError):
            quality_score(item(), judge, Gateway())

    def test_mock_judge_end_to_end(self):
        dims, s_q = quality_score(item(), mock_backend("j", kind="judge"), Gateway())
        assert all(1 <= v <= 5 for v in dims.values())
        assert abs(s_q - dims.mean() * 20.0) < 1e-9
        assert 20.0 <= s_q <= 100.0


class TestRelevanceScore:
    def test_paper_style_single_quoted_float(self):
        judge = canned_judge("{'score': 4.8}")
        assert relevance_score(item(), judge, Gateway()) == 4.8

    def test_double_quoted_integer(self):
        judge = canned_judge('{"score": 5}')
        assert relevance_score(item(), judge, Gateway()) == 5.0

    def test_out_of_range_fails_after_reask(self):
        judge = canned_judge("{'score': 7}")
        with pytest.raises(JudgeParseError):
            relevance_score(item(), judge, Gateway())
        assert len(judge.handler.transcript) == 2

    def test_integer_only_mode_rejects_decimals(self):
        judge = canned_judge("{'score': 4.8}")
        with pytest.raises(JudgeParseError):
            relevance_score(item(), judge, Gateway(), integer_only=True)

    def test_integer_only_mode_accepts_integers(self):
        judge = canned_judge("{'score': 4}")
        assert relevance_score(item(), judge, Gateway(), integer_only=True) == 4.0

    def test_reask_recovers(self):
        judge = canned_judge("hmm let me think", "{'score': 2.5}")
        assert relevance_score(item(), judge, Gateway()) == 2.5


class TestBuckets:
    def test_default_edges_match_report_layout(self):
        assert bucket_for(450, DEFAULT_BUCKET_EDGES) == "[300s, 600s)"
        assert bucket_for(600, DEFAULT_BUCKET_EDGES) == "[600s, 900s)"
        assert bucket_for(1800, DEFAULT_BUCKET_EDGES) == "[1200s, 1800s]"
        assert bucket_for(200, DEFAULT_BUCKET_EDGES) is None
        assert bucket_for(1801, DEFAULT_BUCKET_EDGES) is None


class TestAggregate:
    def test_bucket_mean(self):
        scored = [
            ScoredItem(item=item("a", 400), s_l=40.0),
            ScoredItem(item=item("b", 500), s_l=60.0),
        ]
        report = aggregate(scored)
        assert report.buckets["[300s, 600s)"]["means"]["s_l"] == 50.0

    def test_overall_is_item_mean_not_bucket_mean(self):
        scored = [
            ScoredItem(item=item("a", 400), s_l=100.0),
            ScoredItem(item=item("b", 700), s_l=0.0),
            ScoredItem(item=item("c", 800), s_l=0.0),
            ScoredItem(item=item("d", 850), s_l=0.0),
        ]
        report = aggregate(scored)
        # mean of 4 items = 25; mean of 2 bucket means would be 50
        assert report.overall["means"]["s_l"] == 25.0

    def test_empty_bucket_absent(self):
        scored = [ScoredItem(item=item("a", 700), s_l=10.0)]
        report = aggregate(scored)
        assert "[300s, 600s)" not in report.buckets
        assert "[600s, 900s)" in report.buckets

    def test_unbucketed_listed_and_counted_in_overall(self):
        scored = [
            ScoredItem(item=item("in", 700), s_l=100.0),
            ScoredItem(item=item("out", 10.0), s_l=0.0),
        ]
        report = aggregate(scored)
        assert report.unbucketed == ["out"]
        assert report.overall["means"]["s_l"] == 50.0
        assert report.overall["count"] == 2

    def test_permutation_invariance(self):
        rng = random.Random(7)
        scored = [
            ScoredItem(item=item(f"v{i}", rng.uniform(300, 1800)), s_l=rng.uniform(0, 100))
            for i in range(40)
        ]
        one = aggregate(scored).to_dict()
        shuffled = scored[:]
        rng.shuffle(shuffled)
        two = aggregate(shuffled).to_dict()
        assert one["buckets"] == two["buckets"]
        assert one["overall"] == two["overall"]

    def test_report_validates_against_published_schema(self):
        from capweave.cli import report_schema

        scored = [
            ScoredItem(
                item=item("a", 700), s_l=50.0, s_q=80.0, s_r=3.5,
                dims=QualityDims(4, 4, 4, 4, 4, 4),
            ),
            ScoredItem(item=item("b", 100), s_l=10.0),
        ]
        report = aggregate(scored)
        jsonschema.validate(report.to_dict(), report_schema())

    def test_render_table_lists_overall_and_buckets(self):
        scored = [ScoredItem(item=item("a", 700), s_l=42.0)]
        table = aggregate(scored).render_table()
        assert "Overall" in table and "[600s, 900s)" in table and "42.00" in table


class TestScoreItems:
    def test_length_only_requires_no_judge(self):
        items = [item("a", 700, reference="one two three", candidate="one two three")]
        scored = score_items(items, judge=None, gateway=None, metrics={"length"})
        assert scored[0].s_l == 100.0
        assert scored[0].s_q is None

    def test_judge_metrics_without_judge_rejected(self):
        with pytest.raises(ScoringError):
            score_items([item()], judge=None, gateway=None, metrics={"quality"})

    def test_full_run_with_mock_judge(self):
        items = [item(f"v{i}", 400 + i * 300) for i in range(3)]
        scored = score_items(
            items, mock_backend("j", kind="judge"), Gateway(),
            metrics={"length", "quality", "relevance"},
        )
        for s in scored:
            assert s.s_l is not None and s.s_q is not None and s.s_r is not None
            assert 0 <= s.s_r <= 5


class TestLoadEvalItems:
    def test_join_on_video_id(self, tmp_path):
        bench = tmp_path / "bench.jsonl"
        cands = tmp_path / "cands.jsonl"
        bench.write_text(
            json.dumps({"video_id": "a", "duration_s": 700, "reference_caption": "r"}) + "\n"
        )
        cands.write_text(
            json.dumps({"video_id": "a", "candidate_caption": "c"}) + "\n"
        )
        items = load_eval_items(bench, cands)
        assert items[0].candidate_caption == "c"

    def test_missing_candidate_rejected(self, tmp_path):
        bench = tmp_path / "bench.jsonl"
        cands = tmp_path / "cands.jsonl"
        bench.write_text(
            json.dumps({"video_id": "a", "duration_s": 1, "reference_caption": "r"}) + "\n"
        )
        cands.write_text("")
        with pytest.raises(ScoringError, match="a"):
            load_eval_items(bench, cands)

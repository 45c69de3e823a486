"""Long-caption metrics: length score, judge quality score, judge relevance score.

The length score compares candidate word count l' against the reference
word count l with a piecewise linear penalty (overlong decays over a 3x
range, truncated over a 2x range of the ratio). Quality asks a judge for
six 1-5 dimension scores and rescales their mean to a percentage;
relevance asks a judge for one detail-orientation score on [0, 5].
Reports aggregate per duration bucket plus an overall item-mean.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .envelope import EnvelopeParseError, extract_object, parse_score
from .gateway import ChatRequest, GenerationParams, Gateway, ModelEndpoint
from .prompts import QUALITY_PROMPT, RELEVANCE_PROMPT, PromptTemplate

DEFAULT_BUCKET_EDGES = [300.0, 600.0, 900.0, 1200.0, 1800.0]
DEFAULT_EVAL_REQUEST = "Please provide a detailed description of the video."

# Judge replies must map onto these six rubric dimensions.
QUALITY_KEY_TO_FIELD = {
    "Relevance": "relevance",
    "Accuracy": "accuracy",
    "Coherence": "coherence",
    "Clarity": "clarity",
    "Breadth and Depth": "breadth_depth",
    "Reading Experience": "readability",
}

# Judges default to temperature 0 so reports are reproducible.
JUDGE_PARAMS = GenerationParams(temperature=0.0, max_tokens=2048)


class ScoringError(ValueError):
    pass


class JudgeParseError(ScoringError):
    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


@dataclass
class EvalItem:
    video_id: str
    duration_s: float
    reference_caption: str
    candidate_caption: str
    request_prompt: str = DEFAULT_EVAL_REQUEST

    def __post_init__(self):
        if not self.reference_caption.strip():
            raise ScoringError(f"item {self.video_id}: reference caption is empty")


@dataclass
class QualityDims:
    relevance: int
    accuracy: int
    coherence: int
    clarity: int
    breadth_depth: int
    readability: int

    def values(self) -> list[int]:
        return [
            self.relevance,
            self.accuracy,
            self.coherence,
            self.clarity,
            self.breadth_depth,
            self.readability,
        ]

    def mean(self) -> float:
        return sum(self.values()) / 6


@dataclass
class ScoredItem:
    item: EvalItem
    s_l: float | None = None
    s_q: float | None = None
    s_r: float | None = None
    dims: QualityDims | None = None


# ---------------------------------------------------------------------------
# Length score
# ---------------------------------------------------------------------------

def count_words(text: str) -> int:
    """Maximal runs of non-whitespace characters (Unicode whitespace)."""
    return len(text.split())


def length_score(l: int, l_prime: int) -> float:
    """Piecewise linear score on [0, 100]; 100 iff l' == l.

    Overlong outputs decay at slope 1/3 in l'/l, truncated ones at slope
    1/2 in l/l'; an empty candidate takes the truncated branch's limit, 0.
    """
    if l < 1:
        raise ScoringError(f"reference word count must be >= 1, got {l}")
    if l_prime < 0:
        raise ScoringError(f"candidate word count must be >= 0, got {l_prime}")
    if l_prime > l:
        return 100.0 * max(0.0, 1.0 - (l_prime / l - 1.0) / 3.0)
    if l_prime == 0:
        return 0.0
    return 100.0 * max(0.0, 1.0 - (l / l_prime - 1.0) / 2.0)


# ---------------------------------------------------------------------------
# Judge scores
# ---------------------------------------------------------------------------

def _judge_once(gateway: Gateway, judge: ModelEndpoint, prompt: str,
                cache_dir: Path | None, params: GenerationParams) -> str:
    request = ChatRequest.user_text(prompt, params=params)
    if cache_dir is not None:
        return gateway.cached_complete(judge, request, cache_dir)
    return gateway.complete(judge, request)


def _parse_quality(raw: str) -> QualityDims:
    obj = extract_object(raw)
    fields = {}
    for key, attr in QUALITY_KEY_TO_FIELD.items():
        if key not in obj:
            raise JudgeParseError(f"quality reply missing dimension {key!r}", raw)
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise JudgeParseError(f"dimension {key!r} is not an integer: {value!r}", raw)
        if not 1 <= value <= 5:
            raise JudgeParseError(f"dimension {key!r} out of range [1, 5]: {value}", raw)
        fields[attr] = value
    return QualityDims(**fields)


def quality_score(
    item: EvalItem,
    judge: ModelEndpoint,
    gateway: Gateway,
    template: PromptTemplate = QUALITY_PROMPT,
    cache_dir: Path | None = None,
    params: GenerationParams = JUDGE_PARAMS,
) -> tuple[QualityDims, float]:
    """Six-dimension rubric scores and their mean x 20."""
    prompt = template.render(request=item.request_prompt, response=item.candidate_caption)
    raw = _judge_once(gateway, judge, prompt, cache_dir, params)
    try:
        dims = _parse_quality(raw)
    except (JudgeParseError, EnvelopeParseError):
        reminder = (
            "\nReminder: output must strictly follow the JSON format with the six "
            "dimension keys, each an integer between 1 and 5, and nothing else."
        )
        raw = _judge_once(gateway, judge, prompt + reminder, cache_dir, params)
        try:
            dims = _parse_quality(raw)
        except EnvelopeParseError as e:
            raise JudgeParseError(f"quality judge reply unusable after re-ask: {e}", raw)
    return dims, dims.mean() * 20.0


def relevance_score(
    item: EvalItem,
    judge: ModelEndpoint,
    gateway: Gateway,
    template: PromptTemplate = RELEVANCE_PROMPT,
    cache_dir: Path | None = None,
    params: GenerationParams = JUDGE_PARAMS,
    integer_only: bool = False,
) -> float:
    """Detail-orientation score in [0, 5]; decimals allowed unless integer_only."""
    prompt = template.render(
        question=item.request_prompt,
        reference=item.reference_caption,
        candidate=item.candidate_caption,
    )

    def attempt(p: str) -> float:
        score = parse_score(_judge_once(gateway, judge, p, cache_dir, params))
        if not 0.0 <= score <= 5.0:
            raise JudgeParseError(f"relevance score out of range [0, 5]: {score}")
        if integer_only and not float(score).is_integer():
            raise JudgeParseError(f"relevance score must be an integer, got {score}")
        return score

    try:
        return attempt(prompt)
    except (JudgeParseError, EnvelopeParseError):
        reminder = (
            "\nReminder: respond only with a Python dictionary string like "
            "{'score': N} where N is between 0 and 5, and nothing else."
        )
        try:
            return attempt(prompt + reminder)
        except EnvelopeParseError as e:
            raise JudgeParseError(f"relevance judge reply unusable after re-ask: {e}", e.raw)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def bucket_label(lo: float, hi: float, last: bool) -> str:
    closer = "]" if last else ")"
    return f"[{_fmt(lo)}s, {_fmt(hi)}s{closer}"


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else str(x)


def bucket_for(duration_s: float, edges: list[float]) -> str | None:
    """Half-open buckets from consecutive edges; the last bucket is closed."""
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        last = i == len(edges) - 2
        if lo <= duration_s < hi or (last and duration_s == hi):
            return bucket_label(lo, hi, last)
    return None


@dataclass
class ScoreReport:
    per_item: list[dict]
    buckets: dict[str, dict]
    overall: dict
    unbucketed: list[str] = field(default_factory=list)
    bucket_edges: list[float] = field(default_factory=lambda: list(DEFAULT_BUCKET_EDGES))

    def to_dict(self) -> dict:
        return {
            "bucket_edges": self.bucket_edges,
            "overall": self.overall,
            "buckets": self.buckets,
            "unbucketed": self.unbucketed,
            "per_item": self.per_item,
        }

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")

    def render_table(self) -> str:
        """Aligned plain-text table: one row per bucket plus Overall."""
        metrics = [m for m in ("s_l", "s_q", "s_r") if m in self.overall["means"]]
        headers = ["bucket", "n"] + [m.replace("s_", "S_") for m in metrics]
        rows = [["Overall", str(self.overall["count"])]
                + [f"{self.overall['means'][m]:.2f}" for m in metrics]]
        for label, stats in self.buckets.items():
            rows.append(
                [label, str(stats["count"])]
                + [f"{stats['means'][m]:.2f}" if m in stats["means"] else "-" for m in metrics]
            )
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        lines += ["  ".join(c.ljust(widths[i]) for i, c in enumerate(r)) for r in rows]
        return "\n".join(lines)


def _mean_over(scored: list[ScoredItem], metric: str) -> float | None:
    present = [getattr(s, metric) for s in scored if getattr(s, metric) is not None]
    if not present:
        return None
    # fsum is exactly rounded, so the mean is permutation-invariant.
    return math.fsum(present) / len(present)


def aggregate(
    items_with_scores: list[ScoredItem],
    bucket_edges: list[float] | None = None,
) -> ScoreReport:
    """Per-bucket arithmetic means plus the overall mean over all items.

    The overall row is an item-mean, never a mean of bucket means; items
    whose duration falls outside every bucket are listed as unbucketed but
    still count toward the overall row.
    """
    edges = list(bucket_edges) if bucket_edges is not None else list(DEFAULT_BUCKET_EDGES)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ScoringError(f"bucket edges must be strictly increasing, got {edges}")

    per_bucket: dict[str, list[ScoredItem]] = {}
    unbucketed: list[str] = []
    per_item: list[dict] = []
    for s in items_with_scores:
        label = bucket_for(s.item.duration_s, edges)
        if label is None:
            unbucketed.append(s.item.video_id)
        else:
            per_bucket.setdefault(label, []).append(s)
        row = {
            "video_id": s.item.video_id,
            "duration_s": s.item.duration_s,
            "bucket": label,
        }
        for metric in ("s_l", "s_q", "s_r"):
            if getattr(s, metric) is not None:
                row[metric] = getattr(s, metric)
        if s.dims is not None:
            row["dims"] = vars(s.dims)
        per_item.append(row)

    def stats(group: list[ScoredItem]) -> dict:
        means = {}
        for metric in ("s_l", "s_q", "s_r"):
            m = _mean_over(group, metric)
            if m is not None:
                means[metric] = m
        return {"count": len(group), "means": means}

    # Emit buckets in edge order; empty buckets stay absent.
    ordered = {}
    for i in range(len(edges) - 1):
        label = bucket_label(edges[i], edges[i + 1], i == len(edges) - 2)
        if label in per_bucket:
            ordered[label] = stats(per_bucket[label])

    return ScoreReport(
        per_item=per_item,
        buckets=ordered,
        overall=stats(items_with_scores),
        unbucketed=unbucketed,
        bucket_edges=edges,
    )


# ---------------------------------------------------------------------------
# Manifest I/O and the scoring run
# ---------------------------------------------------------------------------

def load_eval_items(bench_path: Path, candidates_path: Path) -> list[EvalItem]:
    """Join a bench manifest with a candidate file on video_id.

    Bench rows: {video_id, duration_s, reference_caption, request_prompt?};
    candidate rows: {video_id, candidate_caption}. Every bench row must
    find its candidate.
    """
    candidates: dict[str, str] = {}
    for row in _read_jsonl(candidates_path):
        candidates[str(row["video_id"])] = str(row["candidate_caption"])
    items = []
    missing = []
    for row in _read_jsonl(bench_path):
        vid = str(row["video_id"])
        if vid not in candidates:
            missing.append(vid)
            continue
        items.append(
            EvalItem(
                video_id=vid,
                duration_s=float(row["duration_s"]),
                reference_caption=str(row["reference_caption"]),
                candidate_caption=candidates[vid],
                request_prompt=str(row.get("request_prompt", DEFAULT_EVAL_REQUEST)),
            )
        )
    if missing:
        raise ScoringError(f"no candidate caption for video ids: {missing}")
    if not items:
        raise ScoringError(f"bench manifest {bench_path} has no rows")
    return items


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def score_items(
    items: list[EvalItem],
    judge: ModelEndpoint | None,
    gateway: Gateway | None,
    metrics: set[str] = frozenset({"length", "quality", "relevance"}),
    cache_dir: Path | None = None,
    parallelism: int = 4,
    integer_only_relevance: bool = False,
) -> list[ScoredItem]:
    """Compute the requested metrics for every item; judge calls fan out."""
    need_judge = bool({"quality", "relevance"} & metrics)
    if need_judge and (judge is None or gateway is None):
        raise ScoringError("quality/relevance metrics need a judge endpoint and gateway")

    def one(item: EvalItem) -> ScoredItem:
        scored = ScoredItem(item=item)
        if "length" in metrics:
            scored.s_l = length_score(
                count_words(item.reference_caption), count_words(item.candidate_caption)
            )
        if "quality" in metrics:
            scored.dims, scored.s_q = quality_score(
                item, judge, gateway, cache_dir=cache_dir
            )
        if "relevance" in metrics:
            scored.s_r = relevance_score(
                item, judge, gateway, cache_dir=cache_dir,
                integer_only=integer_only_relevance,
            )
        return scored

    if not need_judge:
        return [one(i) for i in items]
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        return list(pool.map(one, items))

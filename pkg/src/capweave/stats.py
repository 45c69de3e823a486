"""Dataset statistics and the abnormal-caption detector.

Covers duration and caption-length histograms, average lengths, top-k word
frequencies with stopword exclusion, and the looping/truncation detector
used to pre-flag captions during benchmark import. Sensitive-content
flagging is deliberately not automated; that judgment stays with human
review.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

DATASET_DURATION_EDGES = [0.0, 60.0, 120.0, 180.0]
BENCH_DURATION_EDGES = [300.0, 600.0, 900.0, 1200.0, 1800.0]
DEFAULT_LENGTH_EDGES = [0.0, 500.0, 1000.0, 1500.0, 3000.0]

# Looping thresholds: a block of at least MIN_BLOCK tokens repeating at least
# MIN_REPEATS times consecutively, with the repeated run reaching into the
# final TAIL_FRAC of the caption. Conservative on purpose: stylistic
# repetition should not be flagged.
LOOP_MIN_BLOCK = 5
LOOP_MIN_REPEATS = 3
LOOP_TAIL_FRAC = 0.4

SENTENCE_END = ".!?"
CLOSERS = "\"'”’)]}»"

# Embedded English stopword list, seeded with the canonical non-informative
# words ("a", "an", "the", "and", "of") and extended to a standard set.
# Replaceable via load_stopwords().
DEFAULT_STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can cannot could did do does doing down
during each few for from further had has have having he her here hers herself
him himself his how i if in into is it its itself just may me might more most
must my myself no nor not now of off on once only or other our ours ourselves
out over own same she should so some such than that the their theirs them
themselves then there these they this those through to too under until up upon
very was we were what when where which while who whom why will with would you
your yours yourself yourselves
""".split())

_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


class StatsError(ValueError):
    pass


@dataclass
class AnomalyVerdict:
    kind: str  # clean | looping | truncated
    evidence: str = ""
    repeat_count: int | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "evidence": self.evidence}
        if self.repeat_count is not None:
            d["repeat_count"] = self.repeat_count
        return d


@dataclass
class DatasetSummary:
    item_count: int
    avg_duration_s: float
    avg_caption_words: float
    duration_histogram: tuple[list[float], list[int]]
    caption_length_histogram: tuple[list[float], list[int]]
    duration_outside: int = 0
    length_outside: int = 0

    def to_dict(self) -> dict:
        return {
            "item_count": self.item_count,
            "avg_duration_s": self.avg_duration_s,
            "avg_caption_words": self.avg_caption_words,
            "duration_histogram": {
                "edges": self.duration_histogram[0],
                "counts": self.duration_histogram[1],
            },
            "caption_length_histogram": {
                "edges": self.caption_length_histogram[0],
                "counts": self.caption_length_histogram[1],
            },
            "duration_outside": self.duration_outside,
            "length_outside": self.length_outside,
        }

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def _histogram(values: list[float], edges: list[float]) -> tuple[list[int], int]:
    """Counts per half-open bin (last bin closed) plus out-of-range count."""
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise StatsError(f"histogram edges must be strictly increasing, got {edges}")
    counts = [0] * (len(edges) - 1)
    outside = 0
    for v in values:
        for i in range(len(edges) - 1):
            last = i == len(edges) - 2
            if edges[i] <= v < edges[i + 1] or (last and v == edges[i + 1]):
                counts[i] += 1
                break
        else:
            outside += 1
    return counts, outside


def _caption_of(row: dict) -> str:
    for key in ("caption", "reference_caption", "initial_caption"):
        if key in row:
            return str(row[key])
    raise StatsError(f"row has no caption field: {sorted(row)}")


def summarize_dataset(
    manifest: Path | list[dict],
    duration_edges: list[float] | None = None,
    length_edges: list[float] | None = None,
) -> DatasetSummary:
    """Means and bucketed counts for a dataset or bench manifest.

    Accepts a JSONL path or preloaded rows; rows carry duration_s plus a
    caption / reference_caption / initial_caption field.
    """
    rows = _load_rows(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    if not rows:
        raise StatsError("manifest is empty")
    duration_edges = list(duration_edges) if duration_edges else list(DATASET_DURATION_EDGES)
    length_edges = list(length_edges) if length_edges else list(DEFAULT_LENGTH_EDGES)

    durations = [float(r["duration_s"]) for r in rows]
    lengths = [float(len(_caption_of(r).split())) for r in rows]
    d_counts, d_out = _histogram(durations, duration_edges)
    l_counts, l_out = _histogram(lengths, length_edges)
    return DatasetSummary(
        item_count=len(rows),
        avg_duration_s=sum(durations) / len(rows),
        avg_caption_words=sum(lengths) / len(rows),
        duration_histogram=(duration_edges, d_counts),
        caption_length_histogram=(length_edges, l_counts),
        duration_outside=d_out,
        length_outside=l_out,
    )


def _load_rows(path: Path | str) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def load_stopwords(path: Path) -> frozenset[str]:
    """One word per line; blank lines and #-comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word and not word.startswith("#"):
            words.add(word)
    return frozenset(words)


def top_words(
    captions: list[str],
    k: int = 50,
    stopwords: frozenset[str] | set[str] | None = None,
) -> list[tuple[str, int]]:
    """Top-k case-folded words by count, stopwords excluded, ties alphabetical."""
    if k <= 0:
        raise StatsError(f"k must be positive, got {k}")
    stop = DEFAULT_STOPWORDS if stopwords is None else stopwords
    counts: Counter[str] = Counter()
    for caption in captions:
        counts.update(
            w for w in _WORD_RE.findall(caption.casefold()) if w not in stop
        )
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def words_csv(ranked: list[tuple[str, int]]) -> str:
    lines = ["word,count"]
    lines += [f"{w},{c}" for w, c in ranked]
    return "\n".join(lines) + "\n"


def histogram_csv(edges: list[float], counts: list[int]) -> str:
    lines = ["bin_lo,bin_hi,count"]
    lines += [f"{edges[i]},{edges[i + 1]},{counts[i]}" for i in range(len(counts))]
    return "\n".join(lines) + "\n"


def detect_anomaly(
    caption: str,
    min_block: int = LOOP_MIN_BLOCK,
    min_repeats: int = LOOP_MIN_REPEATS,
    tail_frac: float = LOOP_TAIL_FRAC,
) -> AnomalyVerdict:
    """Classify a caption as looping, truncated, or clean (looping wins).

    Looping: some block of >= min_block tokens repeats >= min_repeats times
    consecutively, with the repeated run reaching into the final tail_frac
    of the tokens. Truncated: the text does not end in sentence-final
    punctuation (closing quotes/brackets allowed after it).
    """
    tokens = caption.split()
    loop = _find_loop(tokens, min_block, min_repeats, tail_frac)
    if loop is not None:
        block, repeats = loop
        return AnomalyVerdict(kind="looping", evidence=" ".join(block), repeat_count=repeats)
    stripped = caption.rstrip()
    while stripped and stripped[-1] in CLOSERS:
        stripped = stripped[:-1]
    if not stripped or stripped[-1] not in SENTENCE_END:
        tail = " ".join(tokens[-8:])
        return AnomalyVerdict(kind="truncated", evidence=tail)
    return AnomalyVerdict(kind="clean")


def _find_loop(
    tokens: list[str], min_block: int, min_repeats: int, tail_frac: float
) -> tuple[list[str], int] | None:
    n = len(tokens)
    if n < min_block * min_repeats:
        return None
    region_start = int(n * (1.0 - tail_frac))
    # Intern tokens to ints so the O(n^2 / min_repeats) scan compares cheaply.
    vocab: dict[str, int] = {}
    ids = [vocab.setdefault(t, len(vocab)) for t in tokens]

    for block_len in range(min_block, n // min_repeats + 1):
        need = (min_repeats - 1) * block_len
        run = 0
        # run counts consecutive j with ids[j] == ids[j + block_len], scanning down;
        # a run of length r starting at j means the block at j repeats r//L + 1 times.
        for j in range(n - block_len - 1, -1, -1):
            if ids[j] == ids[j + block_len]:
                run += 1
                if run >= need and j + run + block_len > region_start:
                    repeats = run // block_len + 1
                    return tokens[j: j + block_len], repeats
            else:
                run = 0
    return None

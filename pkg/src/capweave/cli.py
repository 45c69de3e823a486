"""Command-line entry point wiring the whole pipeline.

Subcommands: synthesize, score, stats, probe-length, curate {serve,import,
export}. Every subcommand honors --dry-run (prints the planned model-call
count, issues none). Exit codes are a stable scripting contract:

    0  ok
    2  validation problem (bad config, bad manifest, precondition)
    3  backend failure (auth, retries exhausted, context overflow)
    4  parse failure (model reply unusable after the automatic re-ask)
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .curation import CurationError, CurationStore
from .envelope import EnvelopeParseError, parse_envelope
from .gateway import ChatRequest, GatewayError
from .ingest import IngestError, VideoSource, cut_prefixes, frame_timestamps, sample_frames
from .prompts import VIDEO_KEY
from .scoring import (
    ScoringError,
    JudgeParseError,
    aggregate,
    count_words,
    load_eval_items,
    score_items,
)
from .segmenter import SegmenterError, build_clips
from .stats import (
    BENCH_DURATION_EDGES,
    StatsError,
    histogram_csv,
    load_stopwords,
    summarize_dataset,
    top_words,
    words_csv,
)
from .synthesis import SynthesisError, synthesize

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_PARSE = 4

PROBE_DEFAULT_DURATIONS = [60.0, 120.0, 300.0, 600.0, 900.0, 1200.0]
PROBE_DEFAULT_RATE = 0.25  # one frame every 4 seconds


def classify_error(exc: Exception) -> int:
    if isinstance(exc, (EnvelopeParseError, JudgeParseError)):
        return EXIT_PARSE
    if isinstance(exc, SynthesisError):
        return EXIT_PARSE if exc.stage in ("frames", "clips", "summarize") else EXIT_VALIDATION
    if isinstance(exc, GatewayError):
        return EXIT_BACKEND
    if isinstance(
        exc,
        (ConfigError, IngestError, SegmenterError, ScoringError, StatsError,
         CurationError, FileNotFoundError, KeyError, ValueError),
    ):
        return EXIT_VALIDATION
    raise exc


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def _video_sources(manifest: Path) -> list[VideoSource]:
    sources = []
    for row in _read_jsonl(manifest):
        sources.append(
            VideoSource(
                id=str(row["id"]),
                uri=str(row["uri"]),
                duration_s=float(row["duration_s"]) if "duration_s" in row else None,
            )
        )
    if not sources:
        raise ValueError(f"videos manifest {manifest} has no rows")
    return sources


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------

def _planned_calls(duration: float, cfg) -> int:
    frames = len(frame_timestamps(duration, cfg.rate_fps))
    clips = len(build_clips(duration, cfg.window_s, cfg.stride_s))
    if cfg.mode == "frames_only":
        return frames + 1
    if cfg.mode == "clips_only":
        return clips + 1
    return frames + clips + 1


def cmd_synthesize(args, config: RunConfig) -> int:
    cfg = config.synthesis_config()
    videos = _video_sources(Path(args.videos))
    workdir = Path(args.workdir)

    if args.dry_run:
        total = sum(_planned_calls(v.resolved_duration(cfg.probe_template), cfg) for v in videos)
        print(f"dry-run: {len(videos)} videos, {total} planned model calls, none issued")
        return EXIT_OK

    workdir.mkdir(parents=True, exist_ok=True)
    gateway = config.gateway()
    backends = {"captioner": config.endpoint("captioner"), "summarizer": config.endpoint("summarizer")}
    dataset_rows = []
    first_failure = EXIT_OK
    for video in videos:
        try:
            record = synthesize(video, cfg, backends, gateway, workdir)
        except Exception as e:
            code = classify_error(e)
            print(f"error: video {video.id}: {e}", file=sys.stderr)
            if first_failure == EXIT_OK:
                first_failure = code
            continue
        dataset_rows.append(
            {
                "video_id": record.video_id,
                "duration_s": record.duration_s,
                "caption": record.video_caption,
            }
        )
        print(f"synthesized {record.video_id}: {count_words(record.video_caption)} words")

    out_dataset = Path(args.out_dataset) if args.out_dataset else workdir / "dataset.jsonl"
    out_dataset.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in dataset_rows), encoding="utf-8"
    )
    print(f"wrote {len(dataset_rows)} dataset rows to {out_dataset}")
    return first_failure


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def _parse_metrics(raw: str) -> set[str]:
    if raw in ("all", ""):
        return {"length", "quality", "relevance"}
    if raw == "length-only":
        return {"length"}
    metrics = {m.strip() for m in raw.split(",") if m.strip()}
    unknown = metrics - {"length", "quality", "relevance"}
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    return metrics


def report_schema() -> dict:
    text = resources.files("capweave").joinpath("schemas/score_report.schema.json").read_text()
    return json.loads(text)


def cmd_score(args, config: RunConfig) -> int:
    metrics = _parse_metrics(args.metrics)
    items = load_eval_items(Path(args.bench), Path(args.candidates))

    judge_calls = len(items) * len({"quality", "relevance"} & metrics)
    if args.dry_run:
        print(f"dry-run: {len(items)} items, {judge_calls} planned judge calls, none issued")
        return EXIT_OK

    gateway = config.gateway() if judge_calls else None
    judge = config.endpoint("judge") if judge_calls else None
    scored = score_items(
        items,
        judge,
        gateway,
        metrics=metrics,
        cache_dir=config.cache_dir,
        parallelism=int(config.settings["scoring_parallelism"]),
        integer_only_relevance=bool(config.settings["integer_only_relevance"]),
    )
    report = aggregate(scored, bucket_edges=config.settings["bucket_edges"])
    jsonschema.validate(report.to_dict(), report_schema())
    report.save(Path(args.out))
    print(f"scored {len(scored)} items -> {args.out}")
    if args.table:
        Path(args.table).write_text(report.render_table() + "\n", encoding="utf-8")
        print(f"wrote table to {args.table}")
    else:
        print(report.render_table())
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(args, config: RunConfig) -> int:
    if args.dry_run:
        print("dry-run: 0 planned model calls (stats is local)")
        return EXIT_OK
    rows = _read_jsonl(Path(args.manifest))
    duration_edges = BENCH_DURATION_EDGES if args.kind == "bench" else None
    summary = summarize_dataset(rows, duration_edges=duration_edges)
    out = Path(args.out) if args.out else Path(args.manifest).with_suffix(".summary.json")
    summary.save(out)
    print(f"wrote summary to {out}")

    if args.top_words_csv:
        stopwords = load_stopwords(Path(args.stopwords)) if args.stopwords else None
        captions = []
        for r in rows:
            for key in ("caption", "reference_caption", "initial_caption"):
                if key in r:
                    captions.append(str(r[key]))
                    break
        ranked = top_words(captions, k=args.top_k, stopwords=stopwords)
        Path(args.top_words_csv).write_text(words_csv(ranked), encoding="utf-8")
        print(f"wrote word frequencies to {args.top_words_csv}")
    if args.duration_hist_csv:
        edges, counts = summary.duration_histogram
        Path(args.duration_hist_csv).write_text(histogram_csv(edges, counts), encoding="utf-8")
    if args.length_hist_csv:
        edges, counts = summary.caption_length_histogram
        Path(args.length_hist_csv).write_text(histogram_csv(edges, counts), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# probe-length
# ---------------------------------------------------------------------------

def cmd_probe_length(args, config: RunConfig) -> int:
    cfg = config.synthesis_config()
    durations = [float(d) for d in args.durations.split(",")] if args.durations else list(
        PROBE_DEFAULT_DURATIONS
    )
    rate = args.rate_fps if args.rate_fps is not None else PROBE_DEFAULT_RATE
    video = VideoSource(
        id=args.id, uri=args.video,
        duration_s=args.duration_s if args.duration_s else None,
    )
    prefixes = cut_prefixes(
        video, durations, Path(args.workdir), probe_template=cfg.probe_template
    )

    if args.dry_run:
        print(f"dry-run: {len(prefixes)} prefixes, {len(prefixes)} planned model calls, none issued")
        return EXIT_OK

    gateway = config.gateway()
    captioner = config.endpoint("captioner")
    template = cfg.templates["probe"]
    rows = []
    for prefix in prefixes:
        manifest = sample_frames(
            prefix, rate, Path(args.workdir),
            extract_template=cfg.extract_template,
            probe_template=cfg.probe_template,
            image_quality=cfg.image_quality,
        )
        images = [str(manifest.image_path(f)) for f in manifest.frames]
        request = ChatRequest.user_text(template.render(), images=images, params=cfg.params)
        if config.cache_dir is not None:
            raw = gateway.cached_complete(captioner, request, config.cache_dir)
        else:
            raw = gateway.complete(captioner, request)
        description = parse_envelope(raw, VIDEO_KEY)
        rows.append((prefix.duration_s, count_words(description)))
        print(f"prefix {prefix.duration_s}s -> {rows[-1][1]} words")

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["duration_s", "word_count"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# curate
# ---------------------------------------------------------------------------

def cmd_curate(args, config: RunConfig) -> int:
    if args.dry_run:
        print("dry-run: 0 planned model calls (curation is local)")
        return EXIT_OK
    store = CurationStore(Path(args.data_dir))
    if args.curate_cmd == "import":
        n = store.import_items(Path(args.manifest), Path(args.frame_store))
        print(f"imported {n} items into {args.data_dir}")
        return EXIT_OK
    if args.curate_cmd == "export":
        statuses = frozenset(s.strip() for s in args.statuses.split(",") if s.strip())
        text = store.export_bench(statuses)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            print(f"exported {len(text.splitlines())} rows to {args.out}")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.curate_cmd == "serve":
        from .service import serve

        frontend = Path(args.frontend_dir) if args.frontend_dir else None
        print(f"serving curation API on {args.host}:{args.port} (data: {args.data_dir})")
        serve(store, host=args.host, port=args.port, frontend_dir=frontend, token=args.token)
        return EXIT_OK
    raise ValueError(f"unknown curate subcommand {args.curate_cmd!r}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capweave",
        description="Hierarchical long-video caption synthesis, scoring, and benchmark curation.",
    )
    parser.add_argument("--version", action="version", version=f"capweave {__version__}")
    parser.add_argument("--config", help="path to the JSON run config")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--dry-run", action="store_true",
                       help="print the planned model-call count and exit")
        p.add_argument("--cache-dir", help="response cache directory (flag > env > file)")

    p = sub.add_parser("synthesize", help="run the caption pipeline over a videos manifest")
    common(p)
    p.add_argument("--videos", required=True, help="JSONL rows {id, uri, duration_s?}")
    p.add_argument("--workdir", required=True, help="output root for frames and records")
    p.add_argument("--out-dataset", help="dataset JSONL path (default <workdir>/dataset.jsonl)")
    p.add_argument("--mode", choices=["full", "frames_only", "clips_only"])
    p.add_argument("--rate-fps", type=float)
    p.add_argument("--window-s", type=float)
    p.add_argument("--stride-s", type=float)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("score", help="score candidate captions against a bench manifest")
    common(p)
    p.add_argument("--bench", required=True, help="JSONL {video_id, duration_s, reference_caption}")
    p.add_argument("--candidates", required=True, help="JSONL {video_id, candidate_caption}")
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--table", help="also write an aligned plain-text table here")
    p.add_argument("--metrics", default="all",
                   help="all | length-only | comma list of length,quality,relevance")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stats", help="summarize a dataset or bench manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=["dataset", "bench"], default="dataset")
    p.add_argument("--out", help="summary JSON path")
    p.add_argument("--top-words-csv", help="write top-k word frequencies here")
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--stopwords", help="replacement stopword list, one word per line")
    p.add_argument("--duration-hist-csv")
    p.add_argument("--length-hist-csv")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("probe-length", help="caption prefixes of one video, count output words")
    common(p)
    p.add_argument("--video", required=True, help="video uri")
    p.add_argument("--id", default="probe", help="video id for workdir naming")
    p.add_argument("--duration-s", type=float, help="declared duration (skips probing)")
    p.add_argument("--durations", help="comma list of prefix seconds "
                                       f"(default {','.join(str(int(d)) for d in PROBE_DEFAULT_DURATIONS)})")
    p.add_argument("--rate-fps", type=float, help=f"sampling rate (default {PROBE_DEFAULT_RATE})")
    p.add_argument("--workdir", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_probe_length)

    p = sub.add_parser("curate", help="benchmark curation service and tooling")
    curate_sub = p.add_subparsers(dest="curate_cmd", required=True)

    ps = curate_sub.add_parser("serve", help="run the review HTTP service")
    common(ps)
    ps.add_argument("--data-dir", required=True)
    ps.add_argument("--host", default="127.0.0.1")
    ps.add_argument("--port", type=int, default=8040)
    ps.add_argument("--frontend-dir", help="static review-UI bundle to serve at /")
    ps.add_argument("--token", help="require X-Auth-Token to match on /api routes")
    ps.set_defaults(func=cmd_curate)

    pi = curate_sub.add_parser("import", help="import initial captions as pending items")
    common(pi)
    pi.add_argument("--data-dir", required=True)
    pi.add_argument("--manifest", required=True,
                    help="JSONL {video_id, duration_s, initial_caption, frames}")
    pi.add_argument("--frame-store", required=True, help="directory frame paths resolve against")
    pi.set_defaults(func=cmd_curate)

    pe = curate_sub.add_parser("export", help="export the reviewed bench manifest")
    common(pe)
    pe.add_argument("--data-dir", required=True)
    pe.add_argument("--statuses", default="approved,edited")
    pe.add_argument("--out", help="write JSONL here instead of stdout")
    pe.set_defaults(func=cmd_curate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {
            "cache_dir": getattr(args, "cache_dir", None),
            "mode": getattr(args, "mode", None),
            "rate_fps": getattr(args, "rate_fps", None),
            "window_s": getattr(args, "window_s", None),
            "stride_s": getattr(args, "stride_s", None),
        }
        config = load_config(args.config, overrides=overrides)
        return args.func(args, config)
    except Exception as e:  # noqa: BLE001 - single surface for the exit-code contract
        try:
            code = classify_error(e)
        except Exception:
            raise e
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

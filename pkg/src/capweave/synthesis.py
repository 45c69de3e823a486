"""The hierarchical caption pipeline: frames, clips, then the whole video.

Stage one captions every sampled frame (concurrent fan-out). Stage two
walks the overlapping clips strictly in order, feeding each request the
previous clip's caption so the chain stays coherent:

    caption_t = captioner(clip_t frames, caption_{t-1})

Stage three annotates everything with timestamps, groups frame captions
under the clip whose window first contains them, interleaves (group, clip)
blocks chronologically, and asks a long-context summarizer for the final
video caption. Ablation modes drop one level everywhere downstream.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .envelope import EnvelopeParseError, format_reminder, parse_envelope
from .gateway import (
    CAPTIONER,
    ChatRequest,
    GenerationParams,
    Gateway,
    ModelEndpoint,
)
from .ingest import (
    DEFAULT_EXTRACT_TEMPLATE,
    DEFAULT_IMAGE_QUALITY,
    DEFAULT_PROBE_TEMPLATE,
    FrameManifest,
    VideoSource,
    sample_frames,
)
from .prompts import CLIP_KEY, FRAME_KEY, VIDEO_KEY, DEFAULT_TEMPLATES, PromptTemplate
from .segmenter import (
    ClipSpec,
    PromptGroup,
    assign_clip_frames,
    build_clips,
    build_prompt_groups,
)

MODE_FULL = "full"
MODE_FRAMES_ONLY = "frames_only"
MODE_CLIPS_ONLY = "clips_only"
MODES = (MODE_FULL, MODE_FRAMES_ONLY, MODE_CLIPS_ONLY)

# Injected into clip 0's previous-caption slot so the template shape never varies.
EMPTY_CONTEXT_MARKER = "(none — this is the first clip)"


class SynthesisError(RuntimeError):
    def __init__(self, message: str, stage: str | None = None, raw: str | None = None):
        super().__init__(message)
        self.stage = stage
        self.raw = raw


class AssemblyError(SynthesisError):
    pass


@dataclass
class FrameCaption:
    frame_index: int
    timestamp_s: float
    text: str


@dataclass
class ClipCaption:
    clip_index: int
    start_s: float
    end_s: float
    text: str
    prev_caption_digest: str


@dataclass
class SynthesisConfig:
    rate_fps: float = 1.0
    window_s: float = 10.0
    stride_s: float = 5.0
    mode: str = MODE_FULL
    templates: dict[str, PromptTemplate] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    params: GenerationParams = GenerationParams()
    frame_parallelism: int = 4
    max_prompt_chars: int | None = None
    cache_dir: Path | None = None
    extract_template: str = DEFAULT_EXTRACT_TEMPLATE
    probe_template: str = DEFAULT_PROBE_TEMPLATE
    image_quality: int = DEFAULT_IMAGE_QUALITY

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown synthesis mode {self.mode!r}")

    def public_dict(self) -> dict:
        return {
            "rate_fps": self.rate_fps,
            "window_s": self.window_s,
            "stride_s": self.stride_s,
            "mode": self.mode,
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        }


@dataclass
class CaptionRecord:
    video_id: str
    duration_s: float
    config: dict
    frame_captions: list[FrameCaption]
    clip_captions: list[ClipCaption]
    assembled_prompt: str
    video_caption: str
    call_transcript: list[tuple[str, str, int]]  # (endpoint id, request digest, attempts)

    def content_dict(self) -> dict:
        """Everything except the network transcript; basis for record identity."""
        return {
            "video_id": self.video_id,
            "duration_s": self.duration_s,
            "config": self.config,
            "frame_captions": [vars(f) for f in self.frame_captions],
            "clip_captions": [vars(c) for c in self.clip_captions],
            "assembled_prompt": self.assembled_prompt,
            "video_caption": self.video_caption,
        }

    def to_dict(self) -> dict:
        d = self.content_dict()
        d["call_transcript"] = [list(t) for t in self.call_transcript]
        return d

    def save(self, directory: Path) -> Path:
        path = Path(directory) / f"caption.{self.video_id}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path) -> "CaptionRecord":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            video_id=d["video_id"],
            duration_s=float(d["duration_s"]),
            config=d["config"],
            frame_captions=[FrameCaption(**f) for f in d["frame_captions"]],
            clip_captions=[ClipCaption(**c) for c in d["clip_captions"]],
            assembled_prompt=d["assembled_prompt"],
            video_caption=d["video_caption"],
            call_transcript=[tuple(t) for t in d["call_transcript"]],
        )


# ---------------------------------------------------------------------------
# Timestamp annotations
# ---------------------------------------------------------------------------

def format_seconds(x: float) -> str:
    """Integer seconds render bare; fractional ones keep one decimal."""
    return str(int(x)) if float(x).is_integer() else f"{x:.1f}"


def annotate_frame(timestamp_s: float) -> str:
    return f"[t={format_seconds(timestamp_s)}s]"


def annotate_clip(start_s: float, end_s: float) -> str:
    return f"[t={format_seconds(start_s)}s–{format_seconds(end_s)}s]"


# ---------------------------------------------------------------------------
# Dispatch helper: one re-ask on parse failure, transcript bookkeeping
# ---------------------------------------------------------------------------

def _ask(
    gateway: Gateway,
    endpoint: ModelEndpoint,
    request: ChatRequest,
    key: str,
    cache_dir: Path | None,
    transcript: list[tuple[str, str, int]],
) -> str:
    def dispatch(req: ChatRequest) -> str:
        if cache_dir is not None:
            text, rec = gateway.cached_complete_with_log(endpoint, req, cache_dir)
        else:
            text, rec = gateway.complete_with_log(endpoint, req)
        if rec is not None:
            transcript.append((rec.endpoint_id, rec.request_digest, rec.attempts))
        return text

    raw = dispatch(request)
    try:
        return parse_envelope(raw, key)
    except EnvelopeParseError:
        raw = dispatch(request.with_appended_text(format_reminder(key)))
        return parse_envelope(raw, key)  # second failure propagates


# ---------------------------------------------------------------------------
# Stage 1: frame-level captioning
# ---------------------------------------------------------------------------

def caption_frames(
    manifest: FrameManifest,
    captioner: ModelEndpoint,
    template: PromptTemplate,
    gateway: Gateway,
    params: GenerationParams | None = None,
    parallelism: int = 4,
    cache_dir: Path | None = None,
    transcript: list[tuple[str, str, int]] | None = None,
) -> list[FrameCaption]:
    """One caption per frame, order preserved, fan-out bounded by `parallelism`."""
    if not manifest.frames:
        raise SynthesisError("manifest has no frames", stage="frames")
    params = params or GenerationParams()
    transcript = transcript if transcript is not None else []
    prompt = template.render()

    def one(frame) -> tuple[int, str | None, list, str | None]:
        local: list[tuple[str, str, int]] = []
        request = ChatRequest.user_text(
            prompt, images=[str(manifest.image_path(frame))], params=params
        )
        try:
            text = _ask(gateway, captioner, request, FRAME_KEY, cache_dir, local)
            return frame.index, text, local, None
        except EnvelopeParseError as e:
            return frame.index, None, local, str(e)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        results = list(pool.map(one, manifest.frames))

    captions: list[FrameCaption] = []
    failed: list[int] = []
    for frame, (idx, text, local, _err) in zip(manifest.frames, results):
        transcript.extend(local)
        if text is None:
            failed.append(idx)
        else:
            captions.append(FrameCaption(frame_index=idx, timestamp_s=frame.timestamp_s, text=text))
    if failed:
        raise SynthesisError(
            f"frame captioning failed after re-ask for frames {failed}", stage="frames"
        )
    return captions


# ---------------------------------------------------------------------------
# Stage 2: clip-level captioning (strictly sequential)
# ---------------------------------------------------------------------------

def caption_clips(
    clips: list[ClipSpec],
    manifest: FrameManifest,
    captioner: ModelEndpoint,
    template: PromptTemplate,
    gateway: Gateway,
    params: GenerationParams | None = None,
    cache_dir: Path | None = None,
    transcript: list[tuple[str, str, int]] | None = None,
) -> list[ClipCaption]:
    """Iterative clip chain: clip t's request embeds clip t-1's caption verbatim."""
    params = params or GenerationParams()
    transcript = transcript if transcript is not None else []
    captions: list[ClipCaption] = []
    prev_text = EMPTY_CONTEXT_MARKER
    for clip in clips:
        prompt = template.render(prev_clip_caption=prev_text)
        images = [str(manifest.image_path(manifest.frames[i])) for i in clip.frame_indices]
        request = ChatRequest.user_text(prompt, images=images, params=params)
        try:
            text = _ask(gateway, captioner, request, CLIP_KEY, cache_dir, transcript)
        except EnvelopeParseError as e:
            # Later clips depend on this caption, so the chain cannot continue.
            raise SynthesisError(
                f"clip {clip.index} captioning failed after re-ask", stage="clips", raw=e.raw
            )
        captions.append(
            ClipCaption(
                clip_index=clip.index,
                start_s=clip.start_s,
                end_s=clip.end_s,
                text=text,
                prev_caption_digest=hashlib.sha256(prev_text.encode("utf-8")).hexdigest(),
            )
        )
        prev_text = text
    return captions


# ---------------------------------------------------------------------------
# Stage 3: prompt assembly and summarization
# ---------------------------------------------------------------------------

def assemble_video_prompt(
    frame_captions: list[FrameCaption],
    clip_captions: list[ClipCaption],
    groups: list[PromptGroup],
    template: PromptTemplate,
    mode: str = MODE_FULL,
) -> str:
    """Interleave timestamp-annotated (frame group, clip caption) blocks clip by clip."""
    if mode not in MODES:
        raise AssemblyError(f"unknown mode {mode!r}")
    include_frames = mode in (MODE_FULL, MODE_FRAMES_ONLY)
    include_clips = mode in (MODE_FULL, MODE_CLIPS_ONLY)

    by_frame = {f.frame_index: f for f in frame_captions}
    by_clip = {c.clip_index: c for c in clip_captions}

    if include_frames:
        seen: set[int] = set()
        for g in groups:
            overlap = seen.intersection(g.frame_indices)
            if overlap:
                raise AssemblyError(f"groups are not disjoint; duplicated frames {sorted(overlap)}")
            seen.update(g.frame_indices)
        if seen != set(by_frame):
            raise AssemblyError(
                "groups do not partition the frame captions "
                f"(grouped {len(seen)}, captioned {len(by_frame)})"
            )

    blocks: list[str] = []
    clip_order = [g.clip_index for g in groups] if include_frames else [c.clip_index for c in clip_captions]
    for position, clip_index in enumerate(clip_order):
        if include_frames:
            group = groups[position]
            lines = [
                f"{annotate_frame(by_frame[i].timestamp_s)} {by_frame[i].text}"
                for i in group.frame_indices
            ]
            if lines:
                blocks.append("Frame-level descriptions:\n" + "\n".join(lines))
        if include_clips and clip_index in by_clip:
            clip = by_clip[clip_index]
            blocks.append(
                f"Clip-level description {annotate_clip(clip.start_s, clip.end_s)} {clip.text}"
            )

    return template.render(
        num_frame=len(frame_captions) if include_frames else 0,
        num_clip=len(clip_captions) if include_clips else 0,
        interleaved_blocks="\n\n".join(blocks),
    )


def summarize_video(
    assembled_prompt: str,
    summarizer: ModelEndpoint,
    gateway: Gateway,
    params: GenerationParams | None = None,
    cache_dir: Path | None = None,
    transcript: list[tuple[str, str, int]] | None = None,
) -> str:
    if not assembled_prompt.strip():
        raise SynthesisError("assembled prompt is empty", stage="summarize")
    transcript = transcript if transcript is not None else []
    request = ChatRequest.user_text(assembled_prompt, params=params or GenerationParams())
    try:
        return _ask(gateway, summarizer, request, VIDEO_KEY, cache_dir, transcript)
    except EnvelopeParseError as e:
        raise SynthesisError(
            "video summarization failed after re-ask", stage="summarize", raw=e.raw
        )


# ---------------------------------------------------------------------------
# End-to-end
# ---------------------------------------------------------------------------

def synthesize(
    video: VideoSource,
    config: SynthesisConfig,
    backends: dict[str, ModelEndpoint],
    gateway: Gateway,
    workdir: Path,
    save_record: bool = True,
) -> CaptionRecord:
    """Run ingest -> segmentation -> the three captioning stages for one video.

    With a cache_dir configured, a re-run over the same inputs issues zero
    network calls and reproduces the same record content.
    """
    if "summarizer" not in backends:
        raise SynthesisError("backends must provide a summarizer", stage="setup")
    if "captioner" not in backends:
        raise SynthesisError("backends must provide a captioner", stage="setup")
    if backends["captioner"].kind != CAPTIONER:
        raise SynthesisError("captioner backend must accept image parts", stage="setup")

    manifest = sample_frames(
        video,
        config.rate_fps,
        Path(workdir),
        extract_template=config.extract_template,
        probe_template=config.probe_template,
        image_quality=config.image_quality,
    )
    duration = manifest.video.duration_s
    clips = assign_clip_frames(manifest, build_clips(duration, config.window_s, config.stride_s))
    groups = build_prompt_groups(manifest, clips)

    transcript: list[tuple[str, str, int]] = []
    frame_captions: list[FrameCaption] = []
    clip_captions: list[ClipCaption] = []

    if config.mode in (MODE_FULL, MODE_FRAMES_ONLY):
        frame_captions = caption_frames(
            manifest,
            backends["captioner"],
            config.templates["frame"],
            gateway,
            params=config.params,
            parallelism=config.frame_parallelism,
            cache_dir=config.cache_dir,
            transcript=transcript,
        )
    if config.mode in (MODE_FULL, MODE_CLIPS_ONLY):
        clip_captions = caption_clips(
            clips,
            manifest,
            backends["captioner"],
            config.templates["clip"],
            gateway,
            params=config.params,
            cache_dir=config.cache_dir,
            transcript=transcript,
        )

    assembled = assemble_video_prompt(
        frame_captions, clip_captions, groups, config.templates["video"], mode=config.mode
    )
    if config.max_prompt_chars is not None and len(assembled) > config.max_prompt_chars:
        raise SynthesisError(
            f"assembled prompt is {len(assembled)} chars, over the "
            f"{config.max_prompt_chars} guard",
            stage="assemble",
        )
    video_caption = summarize_video(
        assembled,
        backends["summarizer"],
        gateway,
        params=config.params,
        cache_dir=config.cache_dir,
        transcript=transcript,
    )

    record = CaptionRecord(
        video_id=manifest.video.id,
        duration_s=float(duration),
        config=config.public_dict(),
        frame_captions=frame_captions,
        clip_captions=clip_captions,
        assembled_prompt=assembled,
        video_caption=video_caption,
        call_transcript=transcript,
    )
    if save_record:
        record.save(Path(workdir))
    return record

"""Frame sampling: turn a video into a timestamped frame manifest.

Decoding is delegated to an external extraction command (ffmpeg-compatible
by default, overridable), so nothing here links against codecs. Frames are
taken at the exact timestamps k/rate_fps for every k with
k/rate_fps < duration_s, and the manifest is persisted as frames.jsonl
beside the extracted images with relative image paths, so a workdir can be
relocated wholesale.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

# {input}/{timestamp}/{output}/{quality} are substituted per token after
# shlex-splitting, so placeholders survive inside quoted template fragments.
DEFAULT_EXTRACT_TEMPLATE = (
    "ffmpeg -hide_banner -loglevel error -y -ss {timestamp} -i {input} "
    "-frames:v 1 -q:v {quality} {output}"
)
DEFAULT_PROBE_TEMPLATE = (
    "ffprobe -v error -show_entries format=duration "
    "-of default=noprint_wrappers=1:nokey=1 {input}"
)
DEFAULT_IMAGE_QUALITY = 2
MANIFEST_NAME = "frames.jsonl"


class IngestError(RuntimeError):
    """Unreadable source, bad duration, or a failed extraction command.

    When an external command failed, `transcript` carries the argv,
    return code, and stderr of the offending invocation.
    """

    def __init__(self, message: str, transcript: dict | None = None):
        super().__init__(message)
        self.transcript = transcript


@dataclass
class VideoSource:
    id: str
    uri: str
    duration_s: float | None = None

    def resolved_duration(self, probe_template: str = DEFAULT_PROBE_TEMPLATE) -> float:
        """Declared duration wins; otherwise probe container metadata."""
        if self.duration_s is not None:
            if self.duration_s <= 0:
                raise IngestError(f"video {self.id}: declared duration_s must be > 0")
            return float(self.duration_s)
        return probe_duration(self.uri, probe_template)


@dataclass
class FrameRecord:
    index: int
    timestamp_s: float
    image_ref: str


@dataclass
class FrameManifest:
    video: VideoSource
    rate_fps: float
    frames: list[FrameRecord] = field(default_factory=list)
    root: Path | None = None  # directory the image_refs are relative to

    def image_path(self, frame: FrameRecord) -> Path:
        if self.root is None:
            return Path(frame.image_ref)
        return self.root / frame.image_ref

    def save(self, path: Path) -> None:
        """Write header line then one JSON object per frame."""
        header = {
            "video_id": self.video.id,
            "duration_s": self.video.duration_s,
            "rate_fps": self.rate_fps,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for f in self.frames:
            lines.append(
                json.dumps(
                    {"index": f.index, "timestamp_s": f.timestamp_s, "image_ref": f.image_ref},
                    sort_keys=True,
                )
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path, uri: str = "") -> "FrameManifest":
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise IngestError(f"empty manifest: {path}")
        header = json.loads(lines[0])
        frames = [
            FrameRecord(
                index=int(r["index"]),
                timestamp_s=float(r["timestamp_s"]),
                image_ref=str(r["image_ref"]),
            )
            for r in (json.loads(line) for line in lines[1:] if line.strip())
        ]
        video = VideoSource(id=header["video_id"], uri=uri, duration_s=header["duration_s"])
        return cls(video=video, rate_fps=float(header["rate_fps"]), frames=frames, root=path.parent)


def frame_timestamps(duration_s: float, rate_fps: float) -> list[float]:
    """Timestamps k/rate_fps for every integer k with k/rate_fps < duration_s."""
    if duration_s <= 0:
        raise IngestError(f"duration_s must be positive, got {duration_s}")
    if rate_fps <= 0:
        raise IngestError(f"rate_fps must be positive, got {rate_fps}")
    stamps = []
    k = 0
    while k / rate_fps < duration_s:
        stamps.append(k / rate_fps)
        k += 1
    return stamps


def _run_template(template: str, substitutions: dict[str, str]) -> subprocess.CompletedProcess:
    argv = []
    for token in shlex.split(template):
        for key, value in substitutions.items():
            token = token.replace("{" + key + "}", value)
        argv.append(token)
    return subprocess.run(argv, capture_output=True, text=True)


def probe_duration(uri: str, probe_template: str = DEFAULT_PROBE_TEMPLATE) -> float:
    proc = _run_template(probe_template, {"input": uri})
    transcript = {"argv": proc.args, "returncode": proc.returncode, "stderr": proc.stderr}
    if proc.returncode != 0:
        raise IngestError(f"duration probe failed for {uri}", transcript=transcript)
    try:
        duration = float(proc.stdout.strip())
    except ValueError:
        raise IngestError(f"duration probe produced no number for {uri}", transcript=transcript)
    if duration <= 0:
        raise IngestError(f"video {uri} has zero/negative duration", transcript=transcript)
    return duration


def sample_frames(
    video: VideoSource,
    rate_fps: float,
    workdir: Path,
    extract_template: str = DEFAULT_EXTRACT_TEMPLATE,
    probe_template: str = DEFAULT_PROBE_TEMPLATE,
    image_quality: int = DEFAULT_IMAGE_QUALITY,
    image_ext: str = ".jpg",
) -> FrameManifest:
    """Extract one frame per timestamp k/rate_fps < duration and persist the manifest.

    The manifest (frames.jsonl) lands in workdir/<video_id>/ with images
    under frames/; re-running with identical inputs rewrites identical
    bytes.
    """
    duration = video.resolved_duration(probe_template)
    video = VideoSource(id=video.id, uri=video.uri, duration_s=duration)

    video_dir = Path(workdir) / video.id
    frames_dir = video_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    records: list[FrameRecord] = []
    for k, ts in enumerate(frame_timestamps(duration, rate_fps)):
        rel = f"frames/frame_{k:06d}{image_ext}"
        out_path = video_dir / rel
        proc = _run_template(
            extract_template,
            {
                "input": video.uri,
                "timestamp": f"{ts:.3f}",
                "output": str(out_path),
                "quality": str(image_quality),
            },
        )
        if proc.returncode != 0 or not out_path.exists():
            raise IngestError(
                f"frame extraction failed for {video.id} at t={ts}",
                transcript={
                    "argv": proc.args,
                    "returncode": proc.returncode,
                    "stderr": proc.stderr,
                },
            )
        records.append(FrameRecord(index=k, timestamp_s=ts, image_ref=rel))

    manifest = FrameManifest(video=video, rate_fps=rate_fps, frames=records, root=video_dir)
    manifest.save(video_dir / MANIFEST_NAME)
    return manifest


def cut_prefixes(
    video: VideoSource,
    durations_s: list[float],
    workdir: Path,
    probe_template: str = DEFAULT_PROBE_TEMPLATE,
) -> list[VideoSource]:
    """Derive one prefix VideoSource per requested duration.

    Prefixes are virtual: each keeps the source uri and declares
    duration_s = the prefix length, so downstream sampling only ever
    addresses timestamps inside the prefix. `workdir` is accepted for
    callers that persist per-prefix artifacts next to their manifests.
    """
    total = video.resolved_duration(probe_template)
    prefixes = []
    for d in durations_s:
        if d <= 0:
            raise IngestError(f"prefix duration must be positive, got {d}")
        if d > total:
            raise IngestError(
                f"requested prefix {d}s exceeds {video.id} duration {total}s"
            )
        prefixes.append(VideoSource(id=f"{video.id}.p{_fmt_dur(d)}", uri=video.uri, duration_s=float(d)))
    return prefixes


def _fmt_dur(d: float) -> str:
    return str(int(d)) if float(d).is_integer() else str(d).replace(".", "_")

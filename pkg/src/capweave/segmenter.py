"""Sliding-window clip construction and frame-to-clip assignment.

Two different membership rules live here on purpose:

- clip captioning uses *inclusive* membership (a frame may belong to every
  clip whose window contains it; consecutive windows overlap by
  window_s - stride_s), and
- prompt assembly uses *exclusive* groups (each frame goes to the lowest-
  index clip containing it), so no frame caption is duplicated in the
  aggregation prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ingest import FrameManifest

DEFAULT_WINDOW_S = 10.0
DEFAULT_STRIDE_S = 5.0


class SegmenterError(ValueError):
    pass


@dataclass
class ClipSpec:
    """One sliding-window time range [start_s, end_s) with its member frames."""

    index: int
    start_s: float
    end_s: float
    frame_indices: list[int] = field(default_factory=list)

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def contains(self, timestamp_s: float) -> bool:
        return self.start_s <= timestamp_s < self.end_s

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "frame_indices": list(self.frame_indices),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClipSpec":
        return cls(
            index=int(d["index"]),
            start_s=float(d["start_s"]),
            end_s=float(d["end_s"]),
            frame_indices=[int(i) for i in d.get("frame_indices", [])],
        )


@dataclass
class PromptGroup:
    """Exclusive frame assignment for one clip, used when assembling the video prompt."""

    clip_index: int
    frame_indices: list[int] = field(default_factory=list)


def build_clips(
    duration_s: float,
    window_s: float = DEFAULT_WINDOW_S,
    stride_s: float = DEFAULT_STRIDE_S,
) -> list[ClipSpec]:
    """Build overlapping clips covering [0, duration_s).

    Regular clips start at k*stride_s for every k with
    k*stride_s + window_s <= duration_s. A video no longer than one window
    yields the single clip [0, duration_s). If the regular clips stop short
    of the video end, a tail clip [duration_s - window_s, duration_s)
    (clamped to 0) is appended so coverage is total.
    """
    if duration_s <= 0:
        raise SegmenterError(f"duration_s must be positive, got {duration_s}")
    if stride_s <= 0 or stride_s > window_s:
        raise SegmenterError(
            f"need 0 < stride_s <= window_s, got stride_s={stride_s} window_s={window_s}"
        )

    if duration_s <= window_s:
        return [ClipSpec(index=0, start_s=0.0, end_s=float(duration_s))]

    clips: list[ClipSpec] = []
    k = 0
    while k * stride_s + window_s <= duration_s:
        start = k * stride_s
        clips.append(ClipSpec(index=k, start_s=start, end_s=start + window_s))
        k += 1

    if clips[-1].end_s < duration_s:
        clips.append(
            ClipSpec(
                index=len(clips),
                start_s=max(0.0, duration_s - window_s),
                end_s=float(duration_s),
            )
        )
    return clips


def assign_clip_frames(manifest: FrameManifest, clips: list[ClipSpec]) -> list[ClipSpec]:
    """Fill frame_indices with inclusive membership: start_s <= t < end_s.

    Frames may land in several overlapping clips; a clip left empty at very
    low sampling rates is retained with an empty list.
    """
    out = []
    for clip in clips:
        members = [f.index for f in manifest.frames if clip.contains(f.timestamp_s)]
        out.append(
            ClipSpec(index=clip.index, start_s=clip.start_s, end_s=clip.end_s, frame_indices=members)
        )
    return out


def build_prompt_groups(manifest: FrameManifest, clips: list[ClipSpec]) -> list[PromptGroup]:
    """Partition the manifest's frames into per-clip groups.

    Each frame goes to the lowest-index clip whose range contains its
    timestamp; groups come out in clip order and may be empty.
    """
    groups = [PromptGroup(clip_index=c.index) for c in clips]
    for frame in manifest.frames:
        for pos, clip in enumerate(clips):
            if clip.contains(frame.timestamp_s):
                groups[pos].frame_indices.append(frame.index)
                break
        else:
            raise SegmenterError(
                f"frame {frame.index} at t={frame.timestamp_s} is covered by no clip; "
                "clips must come from build_clips on the same duration"
            )
    return groups

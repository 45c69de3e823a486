"""Clip construction against an integer-arithmetic brute-force enumerator."""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from capweave.ingest import VideoSource, FrameManifest, FrameRecord, frame_timestamps
from capweave.segmenter import (
    SegmenterError,
    assign_clip_frames,
    build_clips,
    build_prompt_groups,
)


def oracle_clips_ms(duration_ms: int, window_ms: int = 10_000, stride_ms: int = 5_000):
    """Independent enumerator in integer milliseconds."""
    if duration_ms <= window_ms:
        return [(0, duration_ms)]
    spans = []
    k = 0
    while k * stride_ms + window_ms <= duration_ms:
        spans.append((k * stride_ms, k * stride_ms + window_ms))
        k += 1
    if spans[-1][1] < duration_ms:
        spans.append((max(0, duration_ms - window_ms), duration_ms))
    return spans


def manifest_at(duration_s: float, rate_fps: float) -> FrameManifest:
    frames = [
        FrameRecord(index=k, timestamp_s=t, image_ref=f"frames/f{k}.jpg")
        for k, t in enumerate(frame_timestamps(duration_s, rate_fps))
    ]
    video = VideoSource(id="synthetic", uri="none", duration_s=duration_s)
    return FrameManifest(video=video, rate_fps=rate_fps, frames=frames)


class TestBuildClips:
    def test_d30_default_windows(self):
        # enumeration: k*5 + 10 <= 30 for k in 0..4
        clips = build_clips(30, 10, 5)
        assert [c.start_s for c in clips] == [0, 5, 10, 15, 20]
        assert [c.end_s for c in clips] == [10, 15, 20, 25, 30]

    def test_single_clip_when_duration_fits_window(self):
        clips = build_clips(10, 10, 5)
        assert len(clips) == 1
        assert (clips[0].start_s, clips[0].end_s) == (0, 10)

    def test_tail_clip_clamps_to_video_end(self):
        # regular windows end at 30; 32 needs the tail [22, 32)
        clips = build_clips(32, 10, 5)
        assert len(clips) == 6
        assert (clips[-1].start_s, clips[-1].end_s) == (22, 32)

    def test_shorter_than_window_keeps_full_range(self):
        clips = build_clips(7.5, 10, 5)
        assert len(clips) == 1
        assert clips[0].end_s == 7.5

    def test_matches_oracle_on_half_second_grid(self):
        for i in range(1, 3601):
            d = i / 2.0
            got = [(c.start_s, c.end_s) for c in build_clips(d)]
            expected = [(a / 1000.0, b / 1000.0) for a, b in oracle_clips_ms(i * 500)]
            assert got == expected, f"D={d}"

    def test_chain_coverage_and_overlap_on_grid(self):
        # coverage via the interval chain; overlap of window - stride between
        # consecutive regular clips
        for i in range(1, 3601):
            d = i / 2.0
            clips = build_clips(d)
            assert clips[0].start_s == 0.0
            for a, b in zip(clips, clips[1:]):
                assert b.start_s <= a.end_s  # no gap
            assert clips[-1].end_s == d
            regular = clips[:-1] if clips[-1].end_s - clips[-1].start_s == 10.0 else clips
            for a, b in zip(regular, regular[1:]):
                if b.end_s - b.start_s == 10.0 and a.end_s - a.start_s == 10.0 and b.start_s - a.start_s == 5.0:
                    assert a.end_s - b.start_s == pytest.approx(5.0)

    def test_point_coverage_brute_force_sample(self):
        # direct point-membership cross-check on a sample of durations
        for d in (0.5, 7.0, 10.0, 12.5, 31.5, 92.8, 333.5, 1800.0):
            clips = build_clips(d)
            t = 0.25
            while t < d:
                assert any(c.start_s <= t < c.end_s for c in clips), (d, t)
                t += 0.5

    def test_rejects_bad_parameters(self):
        with pytest.raises(SegmenterError):
            build_clips(0)
        with pytest.raises(SegmenterError):
            build_clips(30, 10, 0)
        with pytest.raises(SegmenterError):
            build_clips(30, 10, 11)

    @given(st.integers(min_value=1, max_value=7200))
    @settings(max_examples=300)
    def test_determinism(self, half_seconds):
        d = half_seconds / 2.0
        one = [(c.start_s, c.end_s) for c in build_clips(d)]
        two = [(c.start_s, c.end_s) for c in build_clips(d)]
        assert one == two


class TestAssignClipFrames:
    def test_interval_membership_at_1fps(self):
        manifest = manifest_at(30, 1.0)
        clips = assign_clip_frames(manifest, build_clips(30))
        # clip [5, 15) holds frames t=5..14
        middle = next(c for c in clips if c.start_s == 5)
        assert middle.frame_indices == list(range(5, 15))

    def test_first_window(self):
        manifest = manifest_at(30, 1.0)
        clips = assign_clip_frames(manifest, build_clips(30))
        assert clips[0].frame_indices == list(range(0, 10))

    def test_sparse_rate_membership(self):
        # frames at t = 0, 10, 20; clip [5, 15) holds only t=10 (index 1)
        manifest = manifest_at(30, 0.1)
        assert [f.timestamp_s for f in manifest.frames] == [0.0, 10.0, 20.0]
        clips = assign_clip_frames(manifest, build_clips(30))
        middle = next(c for c in clips if c.start_s == 5)
        assert middle.frame_indices == [1]

    def test_empty_clip_retained(self):
        # frames land at t = 0 and 20 only, so [5, 15) is empty
        manifest = manifest_at(30, 0.05)
        assert [f.timestamp_s for f in manifest.frames] == [0.0, 20.0]
        clips = assign_clip_frames(manifest, build_clips(30))
        sizes = {c.start_s: len(c.frame_indices) for c in clips}
        assert sizes[5] == 0

    def test_overlap_duplicates_frames_across_clips(self):
        manifest = manifest_at(30, 1.0)
        clips = assign_clip_frames(manifest, build_clips(30))
        total = sum(len(c.frame_indices) for c in clips)
        assert total > len(manifest.frames)


class TestPromptGroups:
    def test_first_containing_clip_rule(self):
        manifest = manifest_at(30, 1.0)
        clips = build_clips(30)
        groups = build_prompt_groups(manifest, clips)
        assert groups[0].frame_indices == list(range(0, 10))
        assert groups[1].frame_indices == list(range(10, 15))

    def test_single_clip_single_group(self):
        manifest = manifest_at(10, 1.0)
        clips = build_clips(10)
        groups = build_prompt_groups(manifest, clips)
        assert len(groups) == 1
        assert groups[0].frame_indices == list(range(10))

    @given(
        st.integers(min_value=1, max_value=600),
        st.sampled_from([0.1, 0.25, 0.5, 1.0, 2.0]),
    )
    @settings(max_examples=150)
    def test_groups_partition_the_manifest(self, half_seconds, rate):
        d = half_seconds / 2.0
        manifest = manifest_at(d, rate)
        groups = build_prompt_groups(manifest, build_clips(d))
        seen: list[int] = []
        for g in groups:
            seen.extend(g.frame_indices)
        assert sorted(seen) == [f.index for f in manifest.frames]
        assert len(seen) == len(set(seen))

    def test_group_order_follows_clip_order(self):
        manifest = manifest_at(45, 1.0)
        clips = build_clips(45)
        groups = build_prompt_groups(manifest, clips)
        assert [g.clip_index for g in groups] == [c.index for c in clips]

"""Frame sampling against the brute-force counting law."""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from capweave.ingest import (
    FrameManifest,
    IngestError,
    VideoSource,
    cut_prefixes,
    frame_timestamps,
    sample_frames,
)

from conftest import FAILING_EXTRACT_TEMPLATE, STUB_EXTRACT_TEMPLATE, STUB_PROBE_TEMPLATE


def brute_force_frame_count(duration_s: float, rate_fps: float) -> int:
    count = 0
    k = 0
    while k / rate_fps < duration_s:
        count += 1
        k += 1
    return count


class TestFrameTimestamps:
    def test_duration_92_8_at_1fps_gives_93_frames(self):
        # brute force: integers k with k < 92.8 are 0..92
        stamps = frame_timestamps(92.8, 1.0)
        assert len(stamps) == 93
        assert stamps[0] == 0.0 and stamps[-1] == 92.0

    def test_duration_10_at_quarter_fps(self):
        # k/0.25 < 10 holds for k in {0, 1, 2}
        assert frame_timestamps(10, 0.25) == [0.0, 4.0, 8.0]

    def test_subsecond_video_keeps_one_frame(self):
        assert frame_timestamps(0.5, 1.0) == [0.0]

    def test_count_law_on_grid(self):
        # |frames| == |{k >= 0 : k/rate < D}| for D over (0, 600] on a 0.1s grid
        for i in range(1, 6001):
            d = i / 10.0
            for rate in (0.25, 1.0, 2.0):
                assert len(frame_timestamps(d, rate)) == brute_force_frame_count(d, rate)

    @given(
        st.floats(min_value=0.1, max_value=3600, allow_nan=False),
        st.floats(min_value=0.05, max_value=30, allow_nan=False),
    )
    @settings(max_examples=200)
    def test_timestamps_increasing_and_inside(self, duration, rate):
        stamps = frame_timestamps(duration, rate)
        assert all(b > a for a, b in zip(stamps, stamps[1:]))
        assert all(0 <= t < duration for t in stamps)

    def test_rejects_bad_inputs(self):
        with pytest.raises(IngestError):
            frame_timestamps(0, 1.0)
        with pytest.raises(IngestError):
            frame_timestamps(10, 0)


class TestSampleFrames:
    def test_extracts_one_image_per_timestamp(self, make_video, workdir):
        video = make_video("v1", 5.0)
        manifest = sample_frames(video, 1.0, workdir, extract_template=STUB_EXTRACT_TEMPLATE)
        assert len(manifest.frames) == 5
        for frame in manifest.frames:
            path = manifest.image_path(frame)
            assert path.exists()
            content = path.read_text()
            assert content.startswith(video.uri)
        assert (workdir / "v1" / "frames.jsonl").exists()

    def test_manifest_roundtrip_and_byte_stability(self, make_video, workdir):
        video = make_video("v2", 3.3)
        sample_frames(video, 1.0, workdir, extract_template=STUB_EXTRACT_TEMPLATE)
        first = (workdir / "v2" / "frames.jsonl").read_bytes()
        sample_frames(video, 1.0, workdir, extract_template=STUB_EXTRACT_TEMPLATE)
        assert (workdir / "v2" / "frames.jsonl").read_bytes() == first

        loaded = FrameManifest.load(workdir / "v2" / "frames.jsonl", uri=video.uri)
        assert loaded.video.id == "v2"
        assert loaded.rate_fps == 1.0
        assert [f.timestamp_s for f in loaded.frames] == [0.0, 1.0, 2.0, 3.0]

    def test_probed_duration_used_when_not_declared(self, make_video, workdir):
        video = make_video("v3", 4.0, declared=False)
        manifest = sample_frames(
            video, 1.0, workdir,
            extract_template=STUB_EXTRACT_TEMPLATE,
            probe_template=STUB_PROBE_TEMPLATE,
        )
        assert len(manifest.frames) == 4
        assert manifest.video.duration_s == 4.0

    def test_declared_duration_wins_over_probe(self, tmp_path, workdir):
        path = tmp_path / "v4.vid"
        path.write_text("100.0")  # the probe would say 100
        video = VideoSource(id="v4", uri=str(path), duration_s=2.0)
        manifest = sample_frames(
            video, 1.0, workdir,
            extract_template=STUB_EXTRACT_TEMPLATE,
            probe_template=STUB_PROBE_TEMPLATE,
        )
        assert len(manifest.frames) == 2

    def test_extraction_failure_carries_command_transcript(self, make_video, workdir):
        video = make_video("v5", 2.0)
        with pytest.raises(IngestError) as err:
            sample_frames(video, 1.0, workdir, extract_template=FAILING_EXTRACT_TEMPLATE)
        assert err.value.transcript is not None
        assert err.value.transcript["returncode"] == 3

    def test_zero_duration_rejected(self, tmp_path, workdir):
        path = tmp_path / "z.vid"
        path.write_text("0")
        with pytest.raises(IngestError):
            sample_frames(
                VideoSource(id="z", uri=str(path), duration_s=None),
                1.0,
                workdir,
                extract_template=STUB_EXTRACT_TEMPLATE,
                probe_template=STUB_PROBE_TEMPLATE,
            )


class TestCutPrefixes:
    def test_probe_style_prefixes(self, make_video, workdir):
        video = make_video("movie", 1200.0)
        prefixes = cut_prefixes(video, [60, 120, 300, 600, 900, 1200], workdir)
        assert len(prefixes) == 6
        assert [p.duration_s for p in prefixes] == [60, 120, 300, 600, 900, 1200]
        assert all(p.uri == video.uri for p in prefixes)
        assert len({p.id for p in prefixes}) == 6

    def test_identity_length_prefix(self, make_video, workdir):
        video = make_video("m2", 30.0)
        (prefix,) = cut_prefixes(video, [30.0], workdir)
        assert prefix.duration_s == 30.0

    def test_overlong_prefix_names_offender(self, make_video, workdir):
        video = make_video("m3", 1200.0)
        with pytest.raises(IngestError, match="1500"):
            cut_prefixes(video, [60.0, 1500.0], workdir)

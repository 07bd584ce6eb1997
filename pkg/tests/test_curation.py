from __future__ import annotations

import json
from pathlib import Path

import pytest

from collisionseg.curation import (
    DEFAULT_COLLISION_CLASSES,
    CurationConfig,
    OracleClassifier,
    SoundEvent,
    extract_clips,
    filter_collisions,
    write_drop_report,
)
from collisionseg.manifest import write_manifest

DATA = Path(__file__).parent / "data"


def load_fixture():
    spec = json.loads((DATA / "annotations_fixture.json").read_text())
    durations = {vid: info["duration"] for vid, info in spec["videos"].items()}
    events = [SoundEvent(**ev) for ev in spec["events"]]
    amplitudes = {
        f"{ev.video_id}:{i:06d}": ev.mean_amplitude for i, ev in enumerate(events)
    }
    return events, durations, amplitudes


class TestExtractClips:
    def test_narration_centred_clip(self):
        cfg = CurationConfig()
        events = [SoundEvent(video_id="v", t=10.0, label="metal/glass")]
        records, dropped = extract_clips(events, {"v": 60.0}, cfg, "narration-centers")
        assert not dropped
        assert (records[0].clip_start, records[0].clip_end) == (8.5, 11.5)

    def test_narration_clamped_at_start(self):
        cfg = CurationConfig()
        events = [SoundEvent(video_id="v", t=0.5)]
        records, _ = extract_clips(events, {"v": 60.0}, cfg, "narration-centers")
        assert (records[0].clip_start, records[0].clip_end) == (0.0, 3.0)

    def test_narration_clamped_at_end(self):
        cfg = CurationConfig()
        events = [SoundEvent(video_id="v", t=59.5)]
        records, _ = extract_clips(events, {"v": 60.0}, cfg, "narration-centers")
        assert (records[0].clip_start, records[0].clip_end) == (57.0, 60.0)

    def test_sound_interval_copied(self):
        cfg = CurationConfig()
        events = [SoundEvent(video_id="v", start=4.2, end=4.9)]
        records, _ = extract_clips(events, {"v": 60.0}, cfg, "sound-intervals")
        assert (records[0].clip_start, records[0].clip_end) == (4.2, 4.9)

    def test_event_outside_video_dropped_with_reason(self):
        cfg = CurationConfig()
        events = [
            SoundEvent(video_id="v", start=59.0, end=62.0),
            SoundEvent(video_id="v", t=70.0),
        ]
        _, dropped_int = extract_clips(events[:1], {"v": 60.0}, cfg, "sound-intervals")
        _, dropped_nar = extract_clips(events[1:], {"v": 60.0}, cfg, "narration-centers")
        assert dropped_int[0].reason == "outside-video"
        assert dropped_nar[0].reason == "outside-video"

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            extract_clips([], {}, CurationConfig(), "bogus")


class TestFilterCollisions:
    def test_reasons_and_partition(self):
        events, durations, amplitudes = load_fixture()
        cfg = CurationConfig()
        records, extraction_drops = extract_clips(events, durations, cfg, "sound-intervals")
        kept, drops = filter_collisions(
            records, OracleClassifier(), cfg, lambda r: amplitudes[r.sample_id]
        )
        assert len(kept) + len(drops) == len(records)
        kept_ids = {r.sample_id for r in kept}
        drop_ids = {d.sample_id for d in drops}
        assert not kept_ids & drop_ids
        reasons = {d.sample_id: d.reason for d in drops}
        assert reasons["vid_a:000002"] == "class-filter"
        assert reasons["vid_b:000003"] == "amplitude-filter"
        assert reasons["vid_b:000004"] == "scenario-filter"
        assert {d.reason for d in extraction_drops} == {"outside-video", "unknown-video"}

    def test_collision_class_kept(self):
        cfg = CurationConfig()
        assert "metal/glass" in cfg.collision_classes
        assert "plastic/paper" in cfg.collision_classes
        assert "wood-only" in cfg.collision_classes
        assert len(DEFAULT_COLLISION_CLASSES) == 24


class TestGoldenManifest:
    def test_fixture_reproduces_committed_golden(self, tmp_path):
        events, durations, amplitudes = load_fixture()
        cfg = CurationConfig()
        records, _ = extract_clips(events, durations, cfg, "sound-intervals")
        kept, _ = filter_collisions(
            records, OracleClassifier(), cfg, lambda r: amplitudes[r.sample_id]
        )
        out = tmp_path / "manifest.ndjson"
        write_manifest(kept, out, meta={"kind": "curated"})
        got_lines = out.read_text().splitlines()[1:]  # skip the meta line
        golden_lines = (DATA / "golden_manifest.ndjson").read_text().splitlines()
        assert got_lines == golden_lines

    def test_rerun_is_byte_identical(self, tmp_path):
        events, durations, amplitudes = load_fixture()
        cfg = CurationConfig()

        def run(path):
            records, _ = extract_clips(events, durations, cfg, "sound-intervals")
            kept, drops = filter_collisions(
                records, OracleClassifier(), cfg, lambda r: amplitudes[r.sample_id]
            )
            write_manifest(kept, path, meta={"kind": "curated"})
            write_drop_report(drops, path.with_suffix(".csv"))

        run(tmp_path / "a.ndjson")
        run(tmp_path / "b.ndjson")
        assert (tmp_path / "a.ndjson").read_bytes() == (tmp_path / "b.ndjson").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestConfigValidation:
    def test_bad_window(self):
        with pytest.raises(ValueError):
            CurationConfig(peak_window_range=(2.0, 1.0))

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            CurationConfig(narration_clip_len=0.0)

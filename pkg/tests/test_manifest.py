from __future__ import annotations

import numpy as np
import pytest

from collisionseg.manifest import (
    ManifestError,
    SampleRecord,
    decode_gt_masks,
    read_manifest,
    write_manifest,
)
from collisionseg.masks import BinaryMask, mask_to_rle


def test_roundtrip(tmp_path):
    mask = BinaryMask(np.eye(4, dtype=np.uint8))
    records = [
        SampleRecord(
            sample_id="a:0",
            video_id="a",
            clip_start=1.0,
            clip_end=2.5,
            split="test",
            frame_size=(4, 4),
            eval_frame_index=3,
            gt_masks=[mask_to_rle(mask)],
            gt_boxes=[(0, 0, 4, 4)],
            hand_boxes={"left": None, "right": (0, 0, 2, 2)},
            sound_class="metal/glass",
        ),
        SampleRecord(
            sample_id="b:0", video_id="b", clip_start=0.0, clip_end=3.0, split="train"
        ),
    ]
    path = tmp_path / "m.ndjson"
    write_manifest(records, path, meta={"kind": "test", "data_hash": "abc"})
    meta, back = read_manifest(path)
    assert meta == {"kind": "test", "data_hash": "abc"}
    assert len(back) == 2
    assert back[0].hand_boxes == {"left": None, "right": (0, 0, 2, 2)}
    assert back[0].frame_size == (4, 4)
    assert np.array_equal(decode_gt_masks(back[0])[0].grid, mask.grid)
    assert back[1].gt_masks is None


def test_train_record_must_not_carry_eval_fields():
    with pytest.raises(ManifestError):
        SampleRecord(
            sample_id="x",
            video_id="x",
            clip_start=0.0,
            clip_end=1.0,
            split="train",
            eval_frame_index=0,
        )


def test_test_record_requires_gt():
    with pytest.raises(ManifestError):
        SampleRecord(
            sample_id="x", video_id="x", clip_start=0.0, clip_end=1.0, split="test"
        )


def test_clip_ordering_enforced():
    with pytest.raises(ManifestError):
        SampleRecord(
            sample_id="x", video_id="x", clip_start=2.0, clip_end=1.0, split="train"
        )


def test_unknown_fields_rejected():
    with pytest.raises(ManifestError):
        SampleRecord.from_dict({"sample_id": "x", "bogus": 1})


def test_gt_mask_count_bounds():
    with pytest.raises(ManifestError):
        SampleRecord(
            sample_id="x",
            video_id="x",
            clip_start=0.0,
            clip_end=1.0,
            split="test",
            frame_size=(2, 2),
            eval_frame_index=0,
            gt_masks=["4", "4", "4"],
        )


def test_decode_requires_frame_size():
    rec = SampleRecord(
        sample_id="x",
        video_id="x",
        clip_start=0.0,
        clip_end=1.0,
        split="test",
        eval_frame_index=0,
        gt_masks=["0 4"],
    )
    with pytest.raises(ManifestError):
        decode_gt_masks(rec)


def test_duration_property():
    rec = SampleRecord(
        sample_id="x", video_id="x", clip_start=1.5, clip_end=4.0, split="train"
    )
    assert rec.duration == 2.5

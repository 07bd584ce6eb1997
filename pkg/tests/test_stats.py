from __future__ import annotations

import json

import numpy as np

from collisionseg.manifest import SampleRecord
from collisionseg.masks import BinaryMask, mask_to_rle
from collisionseg.stats import dataset_stats


def record(idx, n_masks, duration=1.0, sound_class="metal/glass", size=16, area_px=4):
    masks = []
    for k in range(n_masks):
        g = np.zeros((size, size), dtype=np.uint8)
        g[0, k * area_px : (k + 1) * area_px] = 1
        masks.append(mask_to_rle(BinaryMask(g)))
    return SampleRecord(
        sample_id=f"s{idx}",
        video_id=f"s{idx}",
        clip_start=0.0,
        clip_end=duration,
        split="test",
        frame_size=(size, size),
        eval_frame_index=0,
        gt_masks=masks,
        sound_class=sound_class,
    )


def test_published_split_counts_reproduce_published_fractions(tmp_path):
    # 614 annotated samples, 471 two-object and 143 single-object.
    records = [record(i, 2) for i in range(471)] + [record(471 + i, 1) for i in range(143)]
    report = dataset_stats(records, tmp_path)
    assert report["summary"]["two_object_pct"] == 76.7
    assert report["summary"]["one_object_pct"] == 23.3
    assert report["summary"]["n_annotated"] == 614


def test_empty_manifest_produces_empty_report(tmp_path):
    report = dataset_stats([], tmp_path)
    assert report["summary"]["n_records"] == 0
    assert report["summary"]["two_object_pct"] is None
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "class_hist.csv").exists()


def test_all_identical_records_single_bin(tmp_path):
    records = [record(i, 1, duration=0.5, sound_class="wood-only") for i in range(5)]
    report = dataset_stats(records, tmp_path)
    assert report["class_hist"] == {"wood-only": 5}
    assert report["duration_hist"] == {"<1s": 5}
    assert list(report["n_masks_hist"]) == ["1"]


def test_outputs_written(tmp_path):
    records = [record(0, 2, duration=4.0), record(1, 1, duration=7.0)]
    dataset_stats(records, tmp_path)
    for name in (
        "class_hist.csv",
        "duration_hist.csv",
        "n_masks_hist.csv",
        "mask_size_hist.csv",
        "summary.json",
        "class_hist.png",
        "duration_hist.png",
    ):
        assert (tmp_path / name).exists(), name
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n_records"] == 2

"""Manifest statistics: histograms rendered to CSV and figure files."""

from __future__ import annotations

import csv
import json
from collections import Counter
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from collisionseg.manifest import SampleRecord, decode_gt_masks  # noqa: E402

DURATION_BUCKETS = (("<1s", 0.0, 1.0), ("1-3s", 1.0, 3.0), ("3-5s", 3.0, 5.0), (">=5s", 5.0, float("inf")))
SIZE_BUCKETS = (
    ("<0.5%", 0.0, 0.5),
    ("0.5-1%", 0.5, 1.0),
    ("1-5%", 1.0, 5.0),
    ("5-10%", 5.0, 10.0),
    ("10-20%", 10.0, 20.0),
    (">=20%", 20.0, float("inf")),
)


def bucket_label(value: float, buckets) -> str:
    for label, lo, hi in buckets:
        if lo <= value < hi:
            return label
    return buckets[-1][0]


def mask_area_percentages(records: Sequence[SampleRecord]) -> list[float]:
    out = []
    for rec in records:
        if not rec.gt_masks or rec.frame_size is None:
            continue
        h, w = rec.frame_size
        for mask in decode_gt_masks(rec):
            out.append(100.0 * mask.area() / (h * w))
    return out


def dataset_stats(records: Sequence[SampleRecord], out_dir: str | Path) -> dict:
    """Histogram report over sound class, clip duration, mask count and
    mask size; written as CSVs plus bar-chart PNGs, returned as a dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    class_hist = Counter(rec.sound_class or "unknown" for rec in records)
    duration_hist = Counter(bucket_label(rec.duration, DURATION_BUCKETS) for rec in records)
    n_mask_hist = Counter(len(rec.gt_masks) for rec in records if rec.gt_masks)
    size_hist = Counter(bucket_label(p, SIZE_BUCKETS) for p in mask_area_percentages(records))

    two, one = n_mask_hist.get(2, 0), n_mask_hist.get(1, 0)
    annotated = one + two
    summary = {
        "n_records": len(records),
        "n_annotated": annotated,
        "two_object_pct": round(100.0 * two / annotated, 1) if annotated else None,
        "one_object_pct": round(100.0 * one / annotated, 1) if annotated else None,
    }

    _write_hist(out / "class_hist.csv", "sound_class", class_hist)
    _write_hist(out / "duration_hist.csv", "duration_bucket", duration_hist)
    _write_hist(out / "n_masks_hist.csv", "n_masks", n_mask_hist)
    _write_hist(out / "mask_size_hist.csv", "size_bucket", size_hist)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))

    _plot_hist(out / "class_hist.png", "Collision sound classes", class_hist)
    _plot_hist(
        out / "duration_hist.png",
        "Clip duration",
        {label: duration_hist.get(label, 0) for label, _, _ in DURATION_BUCKETS},
    )
    _plot_hist(out / "n_masks_hist.png", "Masks per sample", n_mask_hist)
    _plot_hist(
        out / "mask_size_hist.png",
        "Mask size (% of frame)",
        {label: size_hist.get(label, 0) for label, _, _ in SIZE_BUCKETS},
    )

    return {
        "summary": summary,
        "class_hist": dict(class_hist),
        "duration_hist": dict(duration_hist),
        "n_masks_hist": {str(k): v for k, v in n_mask_hist.items()},
        "mask_size_hist": dict(size_hist),
    }


def _write_hist(path: Path, key_name: str, hist: dict) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([key_name, "count"])
        for key in sorted(hist, key=str):
            writer.writerow([key, hist[key]])


def _plot_hist(path: Path, title: str, hist: dict) -> None:
    if not hist:
        return
    fig, ax = plt.subplots(figsize=(6, 3.2))
    labels = [str(k) for k in hist]
    ax.bar(range(len(hist)), list(hist.values()), color="#4878a8")
    ax.set_xticks(range(len(hist)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_title(title)
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)

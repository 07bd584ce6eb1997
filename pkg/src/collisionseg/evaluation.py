"""Metrics and analyses: matched mIoU, thresholded AUC, baselines, strata.

Predicted and ground-truth masks are associated by Hungarian assignment
after padding the shorter side with empty masks; scores aggregate over
matched ground-truth entries.  Both headline numbers are reported on a
0-100 scale.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.optimize import linear_sum_assignment  # noqa: E402

from collisionseg.manifest import SampleRecord, decode_gt_masks  # noqa: E402
from collisionseg.masks import BBox, BinaryMask, iou  # noqa: E402
from collisionseg.stats import DURATION_BUCKETS, SIZE_BUCKETS, bucket_label  # noqa: E402
from collisionseg.verify import CollisionPrediction  # noqa: E402

AUC_THRESHOLDS = np.round(np.arange(0.0, 1.0001, 0.05), 2)  # 21 values


def match_masks(pred: Sequence[BinaryMask], gt: Sequence[BinaryMask]) -> list[float]:
    """Per-ground-truth matched IoU under the assignment maximising total IoU.

    The shorter list is padded with empty masks, so an unmatched ground
    truth scores 0; surplus predictions pair with padding and are excluded
    from the returned values.
    """
    if not gt and not pred:
        return []
    shapes = {m.shape for m in list(pred) + list(gt)}
    if len(shapes) > 1:
        raise ValueError(f"masks disagree on shape: {shapes}")
    n = max(len(pred), len(gt))
    scores = np.zeros((n, n), dtype=np.float64)
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            scores[i, j] = iou(p, g)
    rows, cols = linear_sum_assignment(scores, maximize=True)
    matched = {int(j): float(scores[i, j]) for i, j in zip(rows, cols)}
    return [matched.get(j, 0.0) for j in range(len(gt))]


def compute_miou(ious: Sequence[float]) -> float:
    """Mean of matched IoUs on a 0-100 scale; empty input is an error."""
    if len(ious) == 0:
        raise ValueError("cannot average an empty IoU collection")
    return 100.0 * float(np.mean(ious))


def compute_auc(ious: Sequence[float]) -> float:
    """Mean success fraction over IoU thresholds 0 to 1 in steps of 0.05.

    The comparison is inclusive and the 1.0 threshold is included, so a
    perfect predictor reaches 100.
    """
    if len(ious) == 0:
        raise ValueError("cannot compute AUC over an empty IoU collection")
    arr = np.asarray(ious, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("IoU values must lie in [0, 1]")
    success = [(arr >= t).mean() for t in AUC_THRESHOLDS]
    return 100.0 * float(np.mean(success))


def baseline_centre(height: int, width: int) -> CollisionPrediction:
    """Single centred square mask covering 10% of the image."""
    side = int(round((0.1 * height * width) ** 0.5))
    side = max(1, min(side, height, width))
    y0 = (height - side) // 2
    x0 = (width - side) // 2
    mask = BBox(x0, y0, x0 + side, y0 + side).to_mask(height, width)
    return CollisionPrediction(masks=(mask,), provenance=("centre",))


@dataclass
class PerSampleResult:
    sample_id: str
    n_pred: int
    n_gt: int
    ious: list[float]
    duration: float
    gt_area_pcts: list[float]
    provenance: list[str] = field(default_factory=list)


@dataclass
class EvalResult:
    per_sample: list[PerSampleResult]
    miou: float
    auc: float
    strata: dict[str, tuple[float, float, int]]
    n_failures: int = 0

    def pooled_ious(self) -> list[float]:
        return [v for r in self.per_sample for v in r.ious]


def evaluate_records(
    records: Sequence[SampleRecord],
    predictor: Callable[[SampleRecord], CollisionPrediction],
    per_sample_first: bool = False,
) -> EvalResult:
    """Run a predictor over test records and aggregate metrics.

    per_sample_first=True averages IoUs within each sample before pooling
    (sensitivity mode); the default pools all matched-GT IoUs.
    """
    per_sample: list[PerSampleResult] = []
    failures = 0
    for rec in records:
        if rec.split != "test":
            continue
        gt = decode_gt_masks(rec)
        h, w = rec.frame_size  # type: ignore[misc]
        try:
            prediction = predictor(rec)
        except Exception:
            failures += 1
            continue
        ious = match_masks(list(prediction.masks), gt)
        per_sample.append(
            PerSampleResult(
                sample_id=rec.sample_id,
                n_pred=len(prediction.masks),
                n_gt=len(gt),
                ious=ious,
                duration=rec.duration,
                gt_area_pcts=[100.0 * g.area() / (h * w) for g in gt],
                provenance=list(prediction.provenance),
            )
        )
    if not per_sample:
        raise ValueError("no test records were evaluated")
    if per_sample_first:
        pooled = [float(np.mean(r.ious)) for r in per_sample]
    else:
        pooled = [v for r in per_sample for v in r.ious]
    result = EvalResult(
        per_sample=per_sample,
        miou=compute_miou(pooled),
        auc=compute_auc(pooled),
        strata=stratify(per_sample),
        n_failures=failures,
    )
    return result


def stratify(per_sample: Sequence[PerSampleResult]) -> dict[str, tuple[float, float, int]]:
    """(mIoU, AUC, count) per stratum.

    Duration and mask-count strata count samples; size strata count
    ground-truth masks, since a sample's two objects can land in
    different size buckets.
    """
    strata: dict[str, tuple[list[float], int]] = {}

    def add(label: str, ious: list[float]) -> None:
        pool, n = strata.setdefault(label, ([], 0))
        pool.extend(ious)
        strata[label] = (pool, n + 1)

    for r in per_sample:
        add(f"duration:{bucket_label(r.duration, DURATION_BUCKETS)}", r.ious)
        add(f"n_gt:{r.n_gt}", r.ious)
        for pct, iou_val in zip(r.gt_area_pcts, r.ious):
            add(f"size:{bucket_label(pct, SIZE_BUCKETS)}", [iou_val])

    return {
        label: (compute_miou(pool), compute_auc(pool), count)
        for label, (pool, count) in sorted(strata.items())
        if pool
    }


def write_eval_outputs(result: EvalResult, out_dir: str | Path, meta: dict) -> None:
    """per-sample CSV, JSON summary, strata CSV, and strata figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with (out / "per_sample.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "n_pred", "n_gt", "ious", "mean_iou", "provenance"])
        for r in result.per_sample:
            writer.writerow(
                [
                    r.sample_id,
                    r.n_pred,
                    r.n_gt,
                    ";".join(f"{v:.6f}" for v in r.ious),
                    f"{np.mean(r.ious):.6f}",
                    ";".join(r.provenance),
                ]
            )

    summary = {
        "miou": round(result.miou, 4),
        "auc": round(result.auc, 4),
        "n_samples": len(result.per_sample),
        "n_failures": result.n_failures,
        "strata": {
            label: {"miou": round(m, 4), "auc": round(a, 4), "count": c}
            for label, (m, a, c) in result.strata.items()
        },
        **meta,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))

    with (out / "strata.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["stratum", "miou", "auc", "count"])
        for label, (m, a, c) in result.strata.items():
            writer.writerow([label, f"{m:.4f}", f"{a:.4f}", c])

    _plot_strata(result.strata, out)


def _plot_strata(strata: dict[str, tuple[float, float, int]], out: Path) -> None:
    groups = {"duration": [], "n_gt": [], "size": []}
    for label, (m, _a, _c) in strata.items():
        prefix, _, rest = label.partition(":")
        if prefix in groups:
            groups[prefix].append((rest, m))
    order = {
        "duration": [b[0] for b in DURATION_BUCKETS],
        "size": [b[0] for b in SIZE_BUCKETS],
        "n_gt": ["1", "2"],
    }
    for prefix, entries in groups.items():
        if not entries:
            continue
        entries.sort(key=lambda kv: order[prefix].index(kv[0]) if kv[0] in order[prefix] else 99)
        fig, ax = plt.subplots(figsize=(5.5, 3.0))
        ax.bar(range(len(entries)), [m for _, m in entries], color="#4878a8")
        ax.set_xticks(range(len(entries)))
        ax.set_xticklabels([k for k, _ in entries], rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("mIoU")
        ax.set_title(f"Performance by {prefix}")
        fig.tight_layout()
        fig.savefig(out / f"strata_{prefix}.png", dpi=110)
        plt.close(fig)

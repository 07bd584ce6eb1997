"""Sample records and the newline-delimited JSON manifest format.

One record per line with a stable field order so manifests diff cleanly;
the first line is a meta record carrying the config hash and source
revision of whatever produced the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from collisionseg.masks import BinaryMask, rle_to_mask

META_KEY = "_meta"


class ManifestError(ValueError):
    pass


@dataclass
class SampleRecord:
    sample_id: str
    video_id: str
    clip_start: float
    clip_end: float
    split: str  # train | test
    frame_size: Optional[tuple[int, int]] = None  # (H, W), needed to decode RLE masks
    eval_frame_index: Optional[int] = None
    gt_masks: Optional[list[str]] = None  # RLE strings, 1 or 2
    gt_boxes: Optional[list[tuple[int, int, int, int]]] = None
    hand_boxes: Optional[dict[str, Optional[tuple[int, int, int, int]]]] = None
    contact_box: Optional[tuple[int, int, int, int]] = None
    sound_class: Optional[str] = None
    scenario: Optional[str] = None

    def __post_init__(self) -> None:
        if self.split not in ("train", "test"):
            raise ManifestError(f"split must be train or test, got {self.split!r}")
        if not self.clip_start < self.clip_end:
            raise ManifestError(
                f"clip_start must precede clip_end, got [{self.clip_start}, {self.clip_end}]"
            )
        if self.split == "test":
            if self.eval_frame_index is None or not self.gt_masks:
                raise ManifestError(f"test record {self.sample_id} needs eval frame and gt masks")
            if not 1 <= len(self.gt_masks) <= 2:
                raise ManifestError(f"test record {self.sample_id} must carry 1 or 2 gt masks")
        else:
            if self.eval_frame_index is not None or self.gt_masks:
                raise ManifestError(f"train record {self.sample_id} must not carry eval data")

    @property
    def duration(self) -> float:
        return self.clip_end - self.clip_start

    def to_json(self) -> str:
        payload = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                payload[f.name] = value
        return json.dumps(payload, sort_keys=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "SampleRecord":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ManifestError(f"unknown record fields: {sorted(unknown)}")
        rec = cls(**data)
        if rec.frame_size is not None:
            rec.frame_size = tuple(rec.frame_size)  # type: ignore[assignment]
        if rec.gt_boxes is not None:
            rec.gt_boxes = [tuple(b) for b in rec.gt_boxes]  # type: ignore[assignment]
        if rec.hand_boxes is not None:
            rec.hand_boxes = {
                hand: tuple(b) if b is not None else None for hand, b in rec.hand_boxes.items()
            }
        if rec.contact_box is not None:
            rec.contact_box = tuple(rec.contact_box)  # type: ignore[assignment]
        return rec


def decode_gt_masks(record: SampleRecord) -> list[BinaryMask]:
    if not record.gt_masks:
        return []
    if record.frame_size is None:
        raise ManifestError(f"record {record.sample_id} has gt masks but no frame_size")
    h, w = record.frame_size
    return [rle_to_mask(rle, h, w) for rle in record.gt_masks]


def write_manifest(records: list[SampleRecord], path: str | Path, meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps({META_KEY: meta}, sort_keys=True, separators=(",", ":")) + "\n")
        for rec in records:
            f.write(rec.to_json() + "\n")


def read_manifest(path: str | Path) -> tuple[dict, list[SampleRecord]]:
    path = Path(path)
    meta: dict = {}
    records: list[SampleRecord] = []
    with path.open("r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if i == 0 and META_KEY in data:
                meta = data[META_KEY]
                continue
            records.append(SampleRecord.from_dict(data))
    return meta, records

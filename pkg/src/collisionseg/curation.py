"""Dataset curation: clip extraction and collision filtering.

Curation is a pure function of the annotations, the classifier outputs,
and the config, so a rerun reproduces the manifest byte for byte.  Every
dropped record carries exactly one reason.  Processing is per-record and
order-preserving, so classifier calls and media probing can be farmed out
per record as long as results are merged back in input order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from collisionseg.manifest import SampleRecord

# The three collision sound classes known to matter plus editable
# placeholder slots; replace the placeholders with the remaining
# categories of whatever sound taxonomy the source dataset uses.
DEFAULT_COLLISION_CLASSES: tuple[str, ...] = (
    "plastic/paper",
    "metal/glass",
    "wood-only",
) + tuple(f"placeholder-{i:02d}" for i in range(4, 25))


@dataclass(frozen=True)
class CurationConfig:
    collision_classes: frozenset[str] = frozenset(DEFAULT_COLLISION_CLASSES)
    min_mean_amplitude: float = 1e-3
    narration_clip_len: float = 3.0
    peak_window_range: tuple[float, float] = (0.5, 1.5)
    train_audio_len: float = 2.0
    excluded_scenarios: frozenset[str] = frozenset({"social"})

    def __post_init__(self) -> None:
        if self.narration_clip_len <= 0 or self.train_audio_len <= 0:
            raise ValueError("durations must be positive")
        lo, hi = self.peak_window_range
        if not 0 < lo <= hi:
            raise ValueError(f"peak window range must satisfy 0 < low <= high, got {lo}, {hi}")

    def config_hash(self) -> str:
        import hashlib
        import json

        payload = json.dumps(
            {
                "collision_classes": sorted(self.collision_classes),
                "min_mean_amplitude": self.min_mean_amplitude,
                "narration_clip_len": self.narration_clip_len,
                "peak_window_range": list(self.peak_window_range),
                "train_audio_len": self.train_audio_len,
                "excluded_scenarios": sorted(self.excluded_scenarios),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class SoundEvent:
    """A timestamped annotation: either an interval or a narration centre."""

    video_id: str
    start: Optional[float] = None
    end: Optional[float] = None
    t: Optional[float] = None
    label: Optional[str] = None
    scenario: Optional[str] = None
    mean_amplitude: Optional[float] = None


@dataclass
class DropEntry:
    sample_id: str
    video_id: str
    reason: str


class AudioClassifier(Protocol):
    """Adapter contract: predict a sound class for one record."""

    def classify(self, record: SampleRecord) -> Optional[str]: ...


class OracleClassifier:
    """Returns the class already attached to the record (test fixtures)."""

    def classify(self, record: SampleRecord) -> Optional[str]:
        return record.sound_class


def extract_clips(
    events: Sequence[SoundEvent],
    video_durations: dict[str, float],
    cfg: CurationConfig,
    mode: str,
    split: str = "train",
) -> tuple[list[SampleRecord], list[DropEntry]]:
    """Turn timestamped annotations into clip records.

    sound-intervals mode copies [start, end]; narration-centers mode emits
    a fixed-length window centred on each timestamp, shifted (not
    truncated) back inside the video when it overhangs an edge.  Events
    outside the video are dropped with a report entry.
    """
    if mode not in ("sound-intervals", "narration-centers"):
        raise ValueError(f"unknown extraction mode {mode!r}")
    records: list[SampleRecord] = []
    dropped: list[DropEntry] = []
    half = cfg.narration_clip_len / 2.0
    for idx, ev in enumerate(events):
        sample_id = f"{ev.video_id}:{idx:06d}"
        duration = video_durations.get(ev.video_id)
        if duration is None:
            dropped.append(DropEntry(sample_id, ev.video_id, "unknown-video"))
            continue
        if mode == "sound-intervals":
            if ev.start is None or ev.end is None:
                dropped.append(DropEntry(sample_id, ev.video_id, "missing-interval"))
                continue
            start, end = ev.start, ev.end
            if start < 0 or end > duration or start >= end:
                dropped.append(DropEntry(sample_id, ev.video_id, "outside-video"))
                continue
        else:
            if ev.t is None:
                dropped.append(DropEntry(sample_id, ev.video_id, "missing-timestamp"))
                continue
            if ev.t < 0 or ev.t > duration:
                dropped.append(DropEntry(sample_id, ev.video_id, "outside-video"))
                continue
            start, end = ev.t - half, ev.t + half
            if start < 0:
                start, end = 0.0, min(cfg.narration_clip_len, duration)
            elif end > duration:
                start, end = max(0.0, duration - cfg.narration_clip_len), duration
        records.append(
            SampleRecord(
                sample_id=sample_id,
                video_id=ev.video_id,
                clip_start=round(start, 6),
                clip_end=round(end, 6),
                split=split,
                sound_class=ev.label,
                scenario=ev.scenario,
            )
        )
    return records, dropped


def filter_collisions(
    records: Sequence[SampleRecord],
    classifier: AudioClassifier,
    cfg: CurationConfig,
    amplitude_fn: Callable[[SampleRecord], float],
) -> tuple[list[SampleRecord], list[DropEntry]]:
    """Keep records whose class is a collision class, whose mean |amplitude|
    clears the floor, and whose scenario is not excluded."""
    kept: list[SampleRecord] = []
    dropped: list[DropEntry] = []
    for rec in records:
        predicted = classifier.classify(rec)
        if predicted not in cfg.collision_classes:
            dropped.append(DropEntry(rec.sample_id, rec.video_id, "class-filter"))
            continue
        if amplitude_fn(rec) < cfg.min_mean_amplitude:
            dropped.append(DropEntry(rec.sample_id, rec.video_id, "amplitude-filter"))
            continue
        if rec.scenario is not None and rec.scenario in cfg.excluded_scenarios:
            dropped.append(DropEntry(rec.sample_id, rec.video_id, "scenario-filter"))
            continue
        rec.sound_class = predicted
        kept.append(rec)
    return kept, dropped


def write_drop_report(entries: Sequence[DropEntry], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "video_id", "reason"])
        for entry in entries:
            writer.writerow([entry.sample_id, entry.video_id, entry.reason])


def default_config_with_classes(classes: Optional[Sequence[str]] = None) -> CurationConfig:
    if classes is None:
        return CurationConfig()
    return CurationConfig(collision_classes=frozenset(classes))

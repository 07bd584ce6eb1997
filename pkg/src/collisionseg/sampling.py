"""Media access and training-time pair sampling."""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image as PILImage

from collisionseg.audio import AudioClip, load_wav, pad_or_trim
from collisionseg.curation import CurationConfig
from collisionseg.manifest import SampleRecord
from collisionseg.masks import Image


class StoreError(RuntimeError):
    """Unreadable media; callers skip the record and report it."""


class MediaStore(Protocol):
    def frame_count(self, record: SampleRecord) -> int: ...

    def load_frame(self, record: SampleRecord, index: int) -> Image: ...

    def load_audio(self, record: SampleRecord) -> AudioClip: ...


class DirectoryStore:
    """Layout: <root>/images/<video_id>.png (single frame per clip) and
    <root>/audio/<video_id>.wav — the layout the soundboard generator
    writes and the natural one for single-frame fixtures."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def frame_count(self, record: SampleRecord) -> int:
        return 1

    def load_frame(self, record: SampleRecord, index: int) -> Image:
        path = self.root / "images" / f"{record.video_id}.png"
        try:
            arr = np.asarray(PILImage.open(path).convert("RGB"))
        except OSError as exc:
            raise StoreError(f"cannot read frame {path}") from exc
        return Image.from_uint8(arr)

    def load_audio(self, record: SampleRecord) -> AudioClip:
        path = self.root / "audio" / f"{record.video_id}.wav"
        try:
            return load_wav(path)
        except (OSError, ValueError) as exc:
            raise StoreError(f"cannot read audio {path}") from exc

    def mean_amplitude(self, record: SampleRecord) -> float:
        return float(np.abs(self.load_audio(record).samples).mean())


class InMemoryStore:
    """Test double: explicit frames and audio per video id."""

    def __init__(self, frames: dict[str, list[Image]], audio: dict[str, AudioClip]):
        self.frames = frames
        self.audio = audio

    def frame_count(self, record: SampleRecord) -> int:
        return len(self.frames[record.video_id])

    def load_frame(self, record: SampleRecord, index: int) -> Image:
        return self.frames[record.video_id][index]

    def load_audio(self, record: SampleRecord) -> AudioClip:
        return self.audio[record.video_id]


def peak_window(
    samples: np.ndarray,
    sample_rate: int,
    window_range: tuple[float, float],
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Random window (seconds) guaranteed to contain the amplitude peak."""
    duration = len(samples) / sample_rate
    peak_t = int(np.argmax(np.abs(samples))) / sample_rate
    length = float(rng.uniform(*window_range))
    if length >= duration:
        return 0.0, duration
    start = peak_t - length * float(rng.uniform(0.0, 1.0))
    start = min(max(start, 0.0), duration - length)
    return start, start + length


def sample_training_pair(
    record: SampleRecord,
    store: MediaStore,
    cfg: CurationConfig,
    rng: np.random.Generator,
    peak_mode: bool = False,
) -> tuple[Image, AudioClip]:
    """Draw one (frame, audio) training pair from a clip.

    Default mode pairs a random frame with the centred fixed-length audio.
    Peak mode draws a window around the amplitude peak and a frame inside
    that window, then pads the window audio back to the fixed length.
    """
    if record.split != "train":
        raise ValueError(f"training pairs come from train records, got split={record.split!r}")
    clip = store.load_audio(record)
    n_frames = store.frame_count(record)
    if peak_mode:
        start, end = peak_window(clip.samples, clip.sample_rate, cfg.peak_window_range, rng)
        lo = int(start * clip.sample_rate)
        hi = int(end * clip.sample_rate)
        audio = AudioClip(clip.samples[lo:hi].copy(), clip.sample_rate)
        frac_lo, frac_hi = start / clip.duration, end / clip.duration
        frame_frac = float(rng.uniform(frac_lo, frac_hi))
        frame_index = min(int(frame_frac * n_frames), n_frames - 1)
    else:
        audio = clip
        frame_index = int(rng.integers(n_frames))
    audio = pad_or_trim(audio, cfg.train_audio_len)
    return store.load_frame(record, frame_index), audio

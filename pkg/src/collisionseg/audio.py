"""Audio clip type, resampling, and the log-mel spectrogram front end."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from collisionseg.masks import _freeze


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=np.float32)
        if s.ndim != 1:
            raise ValueError(f"audio samples must be 1-D, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", _freeze(s))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def resample(clip: AudioClip, sample_rate: int) -> AudioClip:
    """Linear resampling; returns the clip unchanged when rates already match."""
    if clip.sample_rate == sample_rate:
        return clip
    n_out = max(1, int(round(clip.duration * sample_rate)))
    t_out = np.arange(n_out) / sample_rate
    t_in = np.arange(len(clip.samples)) / clip.sample_rate
    return AudioClip(np.interp(t_out, t_in, clip.samples).astype(np.float32), sample_rate)


def pad_or_trim(clip: AudioClip, duration: float) -> AudioClip:
    """Symmetric zero-padding (or centre trim) to an exact duration."""
    target = int(round(duration * clip.sample_rate))
    n = len(clip.samples)
    if n == target:
        return clip
    if n > target:
        start = (n - target) // 2
        return AudioClip(clip.samples[start : start + target], clip.sample_rate)
    pad = target - n
    left = pad // 2
    out = np.zeros(target, dtype=np.float32)
    out[left : left + n] = clip.samples
    return AudioClip(out, clip.sample_rate)


def save_wav(clip: AudioClip, path) -> None:
    """Write 16-bit PCM mono WAV."""
    pcm = np.clip(clip.samples, -1.0, 1.0)
    pcm = (pcm * 32767.0).astype(np.int16)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(clip.sample_rate)
        f.writeframes(pcm.tobytes())


def load_wav(path) -> AudioClip:
    with wave.open(str(path), "rb") as f:
        if f.getsampwidth() != 2:
            raise ValueError(f"only 16-bit PCM WAV supported, got width {f.getsampwidth()}")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
        data = np.frombuffer(raw, dtype=np.int16).astype(np.float32) / 32767.0
        if f.getnchannels() > 1:
            data = data.reshape(-1, f.getnchannels()).mean(axis=1)
    return AudioClip(data, rate)


@dataclass(frozen=True)
class SpectrogramConfig:
    """Parameters of the log-mel front end."""

    sample_rate: int = 16_000
    win_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int = 64
    fmin: float = 50.0
    fmax: float = 7_800.0
    log_floor: float = 1e-5

    @property
    def win_length(self) -> int:
        return int(round(self.win_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: SpectrogramConfig) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, n_fft // 2 + 1)."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for i in range(cfg.n_mels):
        lo, ctr, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb.astype(np.float32)


def mel_center_freqs(cfg: SpectrogramConfig) -> np.ndarray:
    """Centre frequency (Hz) of each mel filter."""
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def log_mel_spectrogram(clip: AudioClip, cfg: SpectrogramConfig) -> np.ndarray:
    """Log-mel time-frequency matrix of shape (n_mels, n_frames).

    The clip is resampled to cfg.sample_rate first.  Clips shorter than
    one analysis window are zero-padded to the window length, and pure
    silence maps to the constant log(log_floor).
    """
    clip = resample(clip, cfg.sample_rate)
    x = clip.samples
    win, hop = cfg.win_length, cfg.hop_length
    if len(x) < win:
        x = np.pad(x, (0, win - len(x)))
    n_frames = 1 + (len(x) - win) // hop
    window = np.hanning(win).astype(np.float32)
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    spec = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2  # (frames, bins)
    mel = spec @ mel_filterbank(cfg).T  # (frames, mels)
    return np.log(mel.T + cfg.log_floor).astype(np.float32)

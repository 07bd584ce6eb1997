"""Run configuration: defaults, file loading, overrides, and hashing.

A single flat config drives every command.  Precedence is CLI overrides >
config file > built-in defaults; unknown keys are rejected so typos fail
loudly rather than silently running with defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import subprocess
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

STRATEGIES = ("verify", "av", "right", "left", "right-left", "right-av", "left-av", "touch")


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 2."""


@dataclass
class RunConfig:
    # model
    encoder: str = "tiny"  # tiny | pretrained
    image_size: int = 352
    patch_size: int = 16
    embed_dim: int = 32
    token_dim: int = 32
    audio_dim: int = 32
    decoder_scale: float = 8.0
    n_mels: int = 64
    sample_rate: int = 16_000
    win_ms: float = 25.0
    hop_ms: float = 10.0
    audio_len: float = 2.0
    crop_frac: float = 0.5
    mask_threshold: float = 0.5
    freeze_audio_backbone: bool = False
    pretrained_paths: dict = field(default_factory=dict)
    # losses
    lambda_i: float = 1.0
    lambda_f: float = 1.0
    lambda_r: float = 1.0
    p_plus: float = 0.1
    tau: float = 0.07
    learnable_tau: bool = True
    gumbel_tau: float = 0.5
    # collision verification
    alpha: float = 0.6
    beta: float = 15.0
    detector: str = "none"  # none | oracle
    segmenter: str = "boxfill"  # boxfill | oracle
    # training
    batch_size: int = 32
    learning_rate: float = 1e-6
    steps: int = 50_000
    peak_window: bool = False
    peak_window_min: float = 0.5
    peak_window_max: float = 1.5
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0  # 0 = final checkpoint only
    # evaluation
    strategy: str = "verify"
    per_sample_first: bool = False
    # paths
    data_dir: str = ""
    out_dir: str = ""

    def validate(self) -> "RunConfig":
        if self.encoder not in ("tiny", "pretrained"):
            raise ConfigError(f"encoder must be 'tiny' or 'pretrained', got {self.encoder!r}")
        if self.image_size <= 0 or self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} must be a positive multiple of patch_size {self.patch_size}"
            )
        if not 0.0 < self.crop_frac <= 1.0:
            raise ConfigError(f"crop_frac must lie in (0, 1], got {self.crop_frac}")
        if not 0.0 < self.mask_threshold < 1.0:
            raise ConfigError(f"mask_threshold must lie in (0, 1), got {self.mask_threshold}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if not 0.0 < self.p_plus < 1.0:
            raise ConfigError(f"p_plus must lie in (0, 1), got {self.p_plus}")
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        for name in ("lambda_i", "lambda_f", "lambda_r"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if self.batch_size < 1 or self.steps < 1:
            raise ConfigError("batch_size and steps must be positive")
        if self.peak_window_min > self.peak_window_max or self.peak_window_min <= 0:
            raise ConfigError("peak window range must satisfy 0 < min <= max")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.detector not in ("none", "oracle"):
            raise ConfigError(f"detector must be 'none' or 'oracle', got {self.detector!r}")
        if self.segmenter not in ("boxfill", "oracle"):
            raise ConfigError(f"segmenter must be 'boxfill' or 'oracle', got {self.segmenter!r}")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs).validate()


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus KEY=VALUE overrides."""
    data: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text())
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        data.update(raw)
    known = {f.name: f for f in fields(RunConfig)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(value, getattr(cfg, key), key))
    return cfg.validate()


def _coerce(text: str, current, key: str):
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"cannot parse boolean for {key}: {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, dict):
        return json.loads(text)
    return text


def soundboard_profile(**overrides) -> RunConfig:
    """Desk-scale defaults for the synthetic soundboard benchmark.

    beta scales with image size so the pair-distance threshold keeps the
    same meaning it has at the 352-pixel reference resolution.
    """
    image_size = int(overrides.pop("image_size", 64))
    base = dict(
        image_size=image_size,
        patch_size=8,
        learning_rate=1e-3,
        steps=5_000,
        batch_size=32,
        beta=round(15.0 * image_size / 352.0, 2),
        detector="oracle",
        segmenter="oracle",
    )
    base.update(overrides)
    return RunConfig(**base).validate()


def source_revision() -> str:
    """Current git commit, or 'unknown' outside a repository."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
    except OSError:
        return "unknown"
    if out.returncode != 0:
        return "unknown"
    return out.stdout.strip()

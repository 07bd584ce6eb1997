"""Checkpoint persistence with frozen-component verification.

A checkpoint stores the config snapshot, the audio-branch weights, and
content hashes of the frozen components.  Loading rebuilds the bundle from
the snapshot and refuses to proceed if any frozen hash differs from what
the checkpoint was trained against.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch

from collisionseg.config import RunConfig, source_revision
from collisionseg.encoders import EncoderBundle
from collisionseg.losses import ContrastiveTemperature

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class LoadedCheckpoint:
    bundle: EncoderBundle
    cfg: RunConfig
    temperature: ContrastiveTemperature
    step: int
    manifest_hash: str
    optimizer_state: Optional[dict]
    torch_rng_state: Optional[torch.Tensor]


def save_checkpoint(
    path: str | Path,
    bundle: EncoderBundle,
    cfg: RunConfig,
    temperature: ContrastiveTemperature,
    step: int = 0,
    manifest_hash: str = "",
    optimizer: Optional[torch.optim.Optimizer] = None,
    torch_rng: Optional[torch.Generator] = None,
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "revision": source_revision(),
        "frozen_hashes": bundle.frozen_hashes(),
        "audio_state": bundle.audio_state(),
        "temperature_state": temperature.state_dict(),
        "step": step,
        "manifest_hash": manifest_hash,
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng_state": torch_rng.get_state() if torch_rng is not None else None,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    from collisionseg.model import build_bundle

    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    cfg = RunConfig(**payload["config"]).validate()
    bundle = build_bundle(cfg)
    actual = bundle.frozen_hashes()
    expected = payload["frozen_hashes"]
    if actual != expected:
        raise CheckpointError(
            "frozen-encoder hash mismatch: checkpoint was trained against "
            f"{expected} but the config rebuilds {actual}"
        )
    bundle.load_audio_state(payload["audio_state"])
    temperature = ContrastiveTemperature(cfg.tau, cfg.learnable_tau)
    temperature.load_state_dict(payload["temperature_state"])
    return LoadedCheckpoint(
        bundle=bundle,
        cfg=cfg,
        temperature=temperature,
        step=int(payload["step"]),
        manifest_hash=payload.get("manifest_hash", ""),
        optimizer_state=payload.get("optimizer_state"),
        torch_rng_state=payload.get("torch_rng_state"),
    )

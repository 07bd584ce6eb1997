"""Training loop for the audio branch over a curated manifest.

Single-writer training with deterministic batching: every stochastic
draw (batch indices, binarisation noise) comes from one torch generator
whose state is checkpointed, so resuming reproduces the next step
exactly.  Loss components are appended per step to a newline-delimited
JSON log.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from collisionseg.checkpoint import load_checkpoint, save_checkpoint
from collisionseg.config import RunConfig
from collisionseg.curation import CurationConfig
from collisionseg.losses import (
    ContrastiveTemperature,
    LossWeights,
    area_loss,
    feature_level_loss,
    image_level_loss,
    total_loss,
)
from collisionseg.manifest import SampleRecord, read_manifest
from collisionseg.model import build_bundle, clip_to_model_spect, decode_pairs, embed_audio_batch
from collisionseg.sampling import MediaStore, StoreError, sample_training_pair

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    steps_run: int
    first_loss: float
    last_loss: float


def _preload(
    records: list[SampleRecord], store: MediaStore, cfg: RunConfig
) -> tuple[torch.Tensor, torch.Tensor]:
    """Cache frames (uint8) and spectrograms (float32) for fast batching."""
    images, spects = [], []
    for rec in records:
        frame = store.load_frame(rec, 0)
        clip = store.load_audio(rec)
        images.append(torch.from_numpy(frame.to_uint8()).permute(2, 0, 1))
        spects.append(torch.from_numpy(clip_to_model_spect(clip, cfg)))
    return torch.stack(images), torch.stack(spects)


def train(
    cfg: RunConfig,
    manifest_path: str | Path,
    store: MediaStore,
    out_dir: str | Path,
    resume: str | Path | None = None,
) -> TrainResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta, records = read_manifest(manifest_path)
    manifest_hash = meta.get("data_hash", "")
    train_records = [r for r in records if r.split == "train"]
    if len(train_records) < cfg.batch_size:
        raise ValueError(
            f"need at least batch_size={cfg.batch_size} train records, got {len(train_records)}"
        )

    generator = torch.Generator().manual_seed(cfg.seed)
    start_step = 0
    if resume is not None:
        loaded = load_checkpoint(resume)
        if loaded.cfg.config_hash() != cfg.config_hash():
            raise ValueError("resume checkpoint was produced under a different config")
        bundle = loaded.bundle
        temperature = loaded.temperature
        start_step = loaded.step
        if loaded.torch_rng_state is not None:
            generator.set_state(loaded.torch_rng_state)
    else:
        bundle = build_bundle(cfg)
        temperature = ContrastiveTemperature(cfg.tau, cfg.learnable_tau)

    params = list(bundle.trainable_parameters()) + list(temperature.parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.learning_rate)
    if resume is not None and loaded.optimizer_state is not None:
        optimizer.load_state_dict(loaded.optimizer_state)

    weights = LossWeights(cfg.lambda_i, cfg.lambda_f, cfg.lambda_r, cfg.p_plus)
    single_frame = all(store.frame_count(r) == 1 for r in train_records)
    use_cache = single_frame and not cfg.peak_window
    if use_cache:
        cached_images, cached_spects = _preload(train_records, store, cfg)
    sampling_cfg = CurationConfig(
        train_audio_len=cfg.audio_len,
        peak_window_range=(cfg.peak_window_min, cfg.peak_window_max),
    )

    log_path = out / "train_log.ndjson"
    log_mode = "a" if resume is not None else "w"
    first_loss = last_loss = float("nan")
    n = len(train_records)
    with log_path.open(log_mode, encoding="utf-8") as log_file:
        for step in range(start_step, cfg.steps):
            idx = torch.randint(n, (cfg.batch_size,), generator=generator)
            if use_cache:
                images = cached_images[idx].to(torch.float32) / 255.0
                spects = cached_spects[idx]
            else:
                images, spects = _sample_batch(train_records, idx, store, cfg, sampling_cfg, generator)

            embeds = embed_audio_batch(spects, bundle)
            grids, _ = bundle.visual(images)
            batch_masks = decode_pairs(grids, embeds, bundle)
            diag = torch.arange(images.shape[0])
            diag_masks = batch_masks[diag, diag]

            li = image_level_loss(
                images, embeds, diag_masks, bundle, temperature.value(), cfg.gumbel_tau, generator
            )
            lf = feature_level_loss(batch_masks, grids, embeds, temperature.value())
            lr = area_loss(diag_masks, cfg.p_plus)
            loss, breakdown = total_loss(li, lf, lr, weights)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            last_loss = breakdown["total"]
            if step == start_step:
                first_loss = last_loss
            entry = {"step": step, **breakdown, "tau": float(temperature.value().detach())}
            log_file.write(json.dumps(entry) + "\n")
            if cfg.log_every and step % cfg.log_every == 0:
                log.info("step %d loss %.4f", step, last_loss)
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0 and step + 1 < cfg.steps:
                save_checkpoint(
                    out / f"checkpoint_step_{step + 1:06d}.pt",
                    bundle,
                    cfg,
                    temperature,
                    step=step + 1,
                    manifest_hash=manifest_hash,
                    optimizer=optimizer,
                    torch_rng=generator,
                )

    ckpt_path = out / "checkpoint.pt"
    save_checkpoint(
        ckpt_path,
        bundle,
        cfg,
        temperature,
        step=cfg.steps,
        manifest_hash=manifest_hash,
        optimizer=optimizer,
        torch_rng=generator,
    )
    return TrainResult(
        checkpoint_path=str(ckpt_path),
        log_path=str(log_path),
        steps_run=cfg.steps - start_step,
        first_loss=first_loss,
        last_loss=last_loss,
    )


def _sample_batch(
    records: list[SampleRecord],
    idx: torch.Tensor,
    store: MediaStore,
    cfg: RunConfig,
    sampling_cfg: CurationConfig,
    generator: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Slow path for multi-frame clips or peak-window sampling."""
    seed = int(torch.randint(2**31 - 1, (1,), generator=generator))
    rng = np.random.default_rng(seed)
    images, spects = [], []
    for i in idx.tolist():
        rec = records[i]
        try:
            frame, audio = sample_training_pair(rec, store, sampling_cfg, rng, cfg.peak_window)
        except StoreError:
            log.warning("skipping unreadable record %s", rec.sample_id)
            frame, audio = sample_training_pair(records[0], store, sampling_cfg, rng, cfg.peak_window)
        images.append(torch.from_numpy(np.array(frame.pixels)))
        spects.append(torch.from_numpy(clip_to_model_spect(audio, cfg)))
    return torch.stack(images), torch.stack(spects)

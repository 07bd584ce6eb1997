"""Audio-conditioned segmentation: typed forward ops and bundle assembly.

The single-sample functions here (encode_audio, encode_image, decode,
infer_refined) are the inference surface; training uses the batched
helpers which share the exact same modules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from collisionseg import encoders
from collisionseg.audio import AudioClip, SpectrogramConfig, log_mel_spectrogram, pad_or_trim, resample
from collisionseg.config import ConfigError, RunConfig
from collisionseg.masks import Image, SoftMask, peak_crop_box


@dataclass(frozen=True)
class AudioToken:
    """One embedding standing in for a text token."""

    vector: Tensor


@dataclass(frozen=True)
class AudioEmbedding:
    """Conditioning vector in the joint embedding space."""

    vector: Tensor
    unit_norm: bool = True

    def __post_init__(self) -> None:
        if not torch.isfinite(self.vector).all():
            raise ValueError("audio embedding contains non-finite values")
        if self.unit_norm:
            norm = float(self.vector.norm())
            if abs(norm - 1.0) > 1e-4:
                raise ValueError(f"embedding flagged unit-norm has norm {norm}")


@dataclass(frozen=True)
class VisualFeatures:
    """Patch-feature grid (D, h, w) plus a global unit-norm vector (D,)."""

    grid: Tensor
    global_vec: Tensor


def spectrogram_config(cfg: RunConfig) -> SpectrogramConfig:
    return SpectrogramConfig(
        sample_rate=cfg.sample_rate,
        win_ms=cfg.win_ms,
        hop_ms=cfg.hop_ms,
        n_mels=cfg.n_mels,
    )


def spectrogram(clip: AudioClip, cfg: SpectrogramConfig) -> np.ndarray:
    """Log-mel matrix (n_mels, frames); see audio.log_mel_spectrogram."""
    return log_mel_spectrogram(clip, cfg)


def clip_to_model_spect(clip: AudioClip, cfg: RunConfig) -> np.ndarray:
    """Fixed-duration log-mel input: resample, centre pad/trim, transform."""
    spec_cfg = spectrogram_config(cfg)
    clip = pad_or_trim(resample(clip, cfg.sample_rate), cfg.audio_len)
    return spectrogram(clip, spec_cfg)


def build_bundle(cfg: RunConfig) -> encoders.EncoderBundle:
    """Assemble the encoder bundle described by the config.

    Tiny components are randomly initialised from cfg.seed, so rebuilding
    from the same config snapshot reproduces bit-identical frozen weights.
    """
    if cfg.encoder == "tiny":
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            backbone = encoders.TinyAudioBackbone(cfg.n_mels)
            bundle = encoders.EncoderBundle(
                visual=encoders.TinyVisualEncoder(cfg.embed_dim, cfg.patch_size),
                text=encoders.TinyTextEncoder(cfg.token_dim, cfg.embed_dim),
                decoder=encoders.TinyDecoder(cfg.decoder_scale),
                audio_backbone=backbone,
                audio_projection=encoders.AudioProjection(backbone.out_dim, cfg.token_dim),
                audio_pool=encoders.AttentivePool(cfg.token_dim),
                image_size=cfg.image_size,
                freeze_audio_backbone=cfg.freeze_audio_backbone,
            )
        return bundle
    if cfg.encoder == "pretrained":
        paths = cfg.pretrained_paths
        required = {"visual", "text", "decoder", "audio_backbone"}
        missing = required - set(paths)
        if missing:
            raise ConfigError(
                "encoder='pretrained' needs TorchScript exports for "
                f"{sorted(missing)} in pretrained_paths"
            )
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            projection = encoders.AudioProjection(cfg.audio_dim, cfg.token_dim)
            pool = encoders.AttentivePool(cfg.token_dim)
        return encoders.EncoderBundle(
            visual=encoders.ScriptedVisualEncoder(paths["visual"], cfg.embed_dim, cfg.patch_size),
            text=encoders.ScriptedTextEncoder(paths["text"], cfg.token_dim, cfg.embed_dim),
            decoder=encoders.ScriptedDecoder(paths["decoder"]),
            audio_backbone=encoders.ScriptedAudioBackbone(paths["audio_backbone"], cfg.audio_dim),
            audio_projection=projection,
            audio_pool=pool,
            image_size=cfg.image_size,
            freeze_audio_backbone=cfg.freeze_audio_backbone,
        )
    raise ConfigError(f"unknown encoder family {cfg.encoder!r}")


def audio_token_batch(spects: Tensor, bundle: encoders.EncoderBundle) -> Tensor:
    """Spectrogram batch (B, M, T) -> audio tokens (B, D_t)."""
    frames = bundle.audio_backbone(spects.unsqueeze(1))
    return bundle.audio_pool(bundle.audio_projection(frames))


def embed_audio_batch(spects: Tensor, bundle: encoders.EncoderBundle) -> Tensor:
    """Spectrogram batch (B, M, T) -> unit-norm embeddings (B, D)."""
    embeds = bundle.text(audio_token_batch(spects, bundle))
    if not torch.isfinite(embeds).all():
        raise FloatingPointError("audio embedding produced non-finite values")
    return embeds


def encode_audio_token(spect: np.ndarray, bundle: encoders.EncoderBundle) -> AudioToken:
    """One spectrogram -> the token that stands in for a text token."""
    with torch.no_grad():
        t = torch.as_tensor(spect, dtype=_dtype(bundle)).unsqueeze(0)
        return AudioToken(vector=audio_token_batch(t, bundle)[0])


def encode_audio(spect: np.ndarray, bundle: encoders.EncoderBundle) -> AudioEmbedding:
    """One spectrogram -> conditioning embedding via the prompt pathway."""
    with torch.no_grad():
        token = encode_audio_token(spect, bundle)
        vec = bundle.text(token.vector.unsqueeze(0))[0]
        if not torch.isfinite(vec).all():
            raise FloatingPointError("audio embedding produced non-finite values")
    return AudioEmbedding(vector=vec)


def image_grid_batch(images: Tensor, bundle: encoders.EncoderBundle) -> tuple[Tensor, Tensor]:
    """Image batch (B, 3, H, W) -> (grids (B,D,h,w), globals (B,D))."""
    return bundle.visual(images)


def encode_image(image: Image, bundle: encoders.EncoderBundle) -> VisualFeatures:
    with torch.no_grad():
        t = torch.as_tensor(np.array(image.pixels), dtype=_dtype(bundle)).unsqueeze(0)
        grid, glob = bundle.visual(t)
        if not torch.isfinite(grid).all():
            raise FloatingPointError("visual features are non-finite")
    return VisualFeatures(grid=grid[0], global_vec=glob[0])


def decode_pairs(grids: Tensor, embeds: Tensor, bundle: encoders.EncoderBundle) -> Tensor:
    """All image/audio combinations -> mask tensor (B, B', H, W)."""
    return bundle.decoder.forward_pairs(grids, embeds, bundle.image_size)


def decode(features: VisualFeatures, embedding: AudioEmbedding, bundle: encoders.EncoderBundle) -> SoftMask:
    if features.grid.shape[0] != embedding.vector.shape[0]:
        raise ValueError(
            f"feature dim {features.grid.shape[0]} != embedding dim {embedding.vector.shape[0]}"
        )
    with torch.no_grad():
        masks = bundle.decoder.forward_pairs(
            features.grid.unsqueeze(0), embedding.vector.unsqueeze(0), bundle.image_size
        )
    return SoftMask(masks[0, 0].cpu().numpy().astype(np.float32))


def _dtype(bundle: encoders.EncoderBundle) -> torch.dtype:
    return next(bundle.visual.parameters()).dtype


def _resize_image(image: Image, size: int, dtype: torch.dtype) -> Tensor:
    t = torch.as_tensor(np.array(image.pixels), dtype=dtype).unsqueeze(0)
    if t.shape[-1] == size and t.shape[-2] == size:
        return t
    return F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False).clamp(0.0, 1.0)


def infer(image: Image, clip: AudioClip, bundle: encoders.EncoderBundle, cfg: RunConfig) -> SoftMask:
    """Single-pass soft mask at the image's native resolution."""
    dtype = _dtype(bundle)
    spect = clip_to_model_spect(clip, cfg)
    with torch.no_grad():
        embeds = embed_audio_batch(torch.as_tensor(spect, dtype=dtype).unsqueeze(0), bundle)
        grid, _ = bundle.visual(_resize_image(image, cfg.image_size, dtype))
        mask = bundle.decoder.forward_pairs(grid, embeds, cfg.image_size)[0, 0]
        if mask.shape[0] != image.height or mask.shape[1] != image.width:
            mask = F.interpolate(
                mask[None, None], size=(image.height, image.width), mode="bilinear", align_corners=False
            )[0, 0]
    return SoftMask(mask.clamp(0.0, 1.0).cpu().numpy().astype(np.float32))


def infer_refined(
    image: Image,
    clip: AudioClip,
    bundle: encoders.EncoderBundle,
    cfg: RunConfig,
    crop_frac: float | None = None,
) -> SoftMask:
    """Two-pass inference: whole image, then a crop around the peak.

    The second-pass mask is pasted back into a zero canvas at the crop
    location, so the result stays at full resolution.
    """
    crop_frac = cfg.crop_frac if crop_frac is None else crop_frac
    first = infer(image, clip, bundle, cfg)
    box = peak_crop_box(first, crop_frac)
    crop = image.crop(box)
    second = infer(crop, clip, bundle, cfg)
    canvas = np.zeros((image.height, image.width), dtype=np.float32)
    canvas[box.y_min : box.y_max, box.x_min : box.x_max] = second.grid
    return SoftMask(canvas)

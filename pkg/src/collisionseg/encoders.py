"""Encoder components and the bundle that wires them together.

The segmentation network is assembled from five parts: a frozen visual
encoder producing a patch-feature grid, a frozen text encoder that turns a
prompt plus one injected audio token into a conditioning embedding, a
frozen mask decoder, and the trainable audio branch (backbone, projection,
attentive pooling).

Two families implement the interfaces: "tiny" randomly-initialised modules
for desk-scale training and CI, and "scripted" adapters that load
TorchScript exports of larger pretrained components from disk.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator

import torch
import torch.nn.functional as F
from torch import Tensor, nn

PROMPT = "A photo of a"


class VisualEncoder(nn.Module):
    """Contract: forward(images (B,3,H,W)) -> (grid (B,D,h,w), global (B,D))."""

    embed_dim: int
    patch_size: int

    def forward(self, images: Tensor) -> tuple[Tensor, Tensor]:  # pragma: no cover
        raise NotImplementedError


class TextEncoder(nn.Module):
    """Contract: forward(audio_token (B,D_t)) -> unit-norm embedding (B,D)."""

    token_dim: int
    embed_dim: int

    def forward(self, audio_token: Tensor) -> Tensor:  # pragma: no cover
        raise NotImplementedError


class MaskDecoder(nn.Module):
    """Contract: forward_pairs(grid (B,D,h,w), cond (C,D), size) -> (B,C,H,W) in [0,1]."""

    def forward_pairs(self, grid: Tensor, cond: Tensor, out_size: int) -> Tensor:  # pragma: no cover
        raise NotImplementedError

    def forward(self, grid: Tensor, cond: Tensor, out_size: int) -> Tensor:
        """Diagonal variant: one conditioning vector per image."""
        masks = self.forward_pairs(grid, cond, out_size)
        idx = torch.arange(grid.shape[0], device=grid.device)
        return masks[idx, idx]


class AudioBackbone(nn.Module):
    """Contract: forward(spect (B,1,M,T)) -> frame features (B,T',D_a)."""

    out_dim: int

    def forward(self, spect: Tensor) -> Tensor:  # pragma: no cover
        raise NotImplementedError


class TinyVisualEncoder(VisualEncoder):
    """Single-conv patch embedder with a channel mixer; frozen after init.

    Bias-free convolutions keep the feature of a patch proportional to its
    content, so globals of different images stay distinguishable even at
    random initialisation.
    """

    def __init__(self, embed_dim: int = 32, patch_size: int = 8):
        super().__init__()
        self.embed_dim = embed_dim
        self.patch_size = patch_size
        self.patchify = nn.Conv2d(3, embed_dim, kernel_size=patch_size, stride=patch_size, bias=False)
        self.mix = nn.Conv2d(embed_dim, embed_dim, kernel_size=1, bias=False)

    def forward(self, images: Tensor) -> tuple[Tensor, Tensor]:
        grid = self.mix(F.gelu(self.patchify(images)))
        glob = F.normalize(grid.mean(dim=(2, 3)), dim=-1, eps=1e-8)
        return grid, glob


class TinyTextEncoder(TextEncoder):
    """Hash-vocabulary transformer over [BOS] prompt tokens [AUDIO] [EOS].

    The audio token is injected at the final position before the
    end-of-sequence marker; the embedded prompt is computed once at
    construction and cached.
    """

    BOS, EOS = 0, 1

    def __init__(self, token_dim: int = 32, embed_dim: int = 32, vocab_size: int = 64):
        super().__init__()
        self.token_dim = token_dim
        self.embed_dim = embed_dim
        self.vocab_size = vocab_size
        self.table = nn.Embedding(vocab_size, token_dim)
        prompt_ids = [self.BOS] + [self._word_id(w) for w in PROMPT.split()]
        seq_len = len(prompt_ids) + 2  # + audio token + EOS
        self.pos = nn.Parameter(torch.randn(seq_len, token_dim) * 0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=token_dim, nhead=4, dim_feedforward=2 * token_dim, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=1)
        self.out = nn.Linear(token_dim, embed_dim)
        with torch.no_grad():
            prompt_embed = self.table(torch.tensor(prompt_ids, dtype=torch.long))
            eos_embed = self.table(torch.tensor([self.EOS], dtype=torch.long))
        self.register_buffer("prompt_embed", prompt_embed)
        self.register_buffer("eos_embed", eos_embed)

    def _word_id(self, word: str) -> int:
        digest = hashlib.sha1(word.lower().encode()).digest()
        return 2 + int.from_bytes(digest[:4], "big") % (self.vocab_size - 2)

    def forward(self, audio_token: Tensor) -> Tensor:
        b = audio_token.shape[0]
        prompt = self.prompt_embed.unsqueeze(0).expand(b, -1, -1)
        eos = self.eos_embed.unsqueeze(0).expand(b, -1, -1)
        seq = torch.cat([prompt, audio_token.unsqueeze(1), eos], dim=1) + self.pos
        encoded = self.encoder(seq)
        # Read the stream at the injected token: its residual path keeps the
        # output sensitive to the audio even with random frozen weights.
        return F.normalize(self.out(encoded[:, -2]), dim=-1, eps=1e-8)


class TinyDecoder(MaskDecoder):
    """Cosine-similarity decoder: patch/conditioning alignment -> sigmoid map.

    Parameter-free apart from a fixed sharpness, so the frozen-decoder
    contract holds trivially and conditioning alone steers the mask.
    """

    def __init__(self, scale: float = 8.0):
        super().__init__()
        self.register_buffer("scale", torch.tensor(float(scale)))

    def forward_pairs(self, grid: Tensor, cond: Tensor, out_size: int) -> Tensor:
        g = F.normalize(grid, dim=1, eps=1e-8)
        c = F.normalize(cond, dim=-1, eps=1e-8)
        logits = torch.einsum("bdhw,cd->bchw", g, c) * self.scale
        b, n = logits.shape[:2]
        up = F.interpolate(
            logits.reshape(b * n, 1, *logits.shape[2:]),
            size=(out_size, out_size),
            mode="bilinear",
            align_corners=False,
        )
        return torch.sigmoid(up.reshape(b, n, out_size, out_size))


class TinyAudioBackbone(AudioBackbone):
    """Two-conv frontend over the log-mel matrix; emits frame features.

    The mel axis is folded into the channel dimension rather than pooled
    away, so which frequency bands carry energy stays visible to the
    projection.
    """

    def __init__(self, n_mels: int = 64, channels: int = 8):
        super().__init__()
        self.n_mels = n_mels
        self.channels = channels
        self.conv1 = nn.Conv2d(1, channels, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1)
        self.out_dim = channels * ((n_mels + 3) // 4)

    def forward(self, spect: Tensor) -> Tensor:
        # Per-sample standardisation keeps log-mel magnitudes in a sane range.
        mean = spect.mean(dim=(1, 2, 3), keepdim=True)
        std = spect.std(dim=(1, 2, 3), keepdim=True)
        x = (spect - mean) / (std + 1e-5)
        x = F.gelu(self.conv1(x))
        x = F.gelu(self.conv2(x))  # (B, C, M', T')
        b, c, m, t = x.shape
        return x.reshape(b, c * m, t).transpose(1, 2)  # (B, T', C*M')


class AudioProjection(nn.Module):
    """Maps backbone frame features into the text-token space."""

    def __init__(self, in_dim: int = 32, token_dim: int = 32):
        super().__init__()
        self.proj = nn.Linear(in_dim, token_dim)

    def forward(self, frames: Tensor) -> Tensor:
        return self.proj(frames)


class AttentivePool(nn.Module):
    """Single learned query attending over projected frames -> one token."""

    def __init__(self, token_dim: int = 32):
        super().__init__()
        self.query = nn.Parameter(torch.randn(token_dim) * 0.02)

    def forward(self, frames: Tensor) -> Tensor:
        scores = frames @ self.query / (frames.shape[-1] ** 0.5)
        weights = torch.softmax(scores, dim=-1)
        return torch.einsum("bt,btd->bd", weights, frames)


class ScriptedVisualEncoder(VisualEncoder):
    """Adapter around a TorchScript export honouring the visual contract."""

    def __init__(self, path: str, embed_dim: int, patch_size: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.patch_size = patch_size
        self.module = torch.jit.load(path, map_location="cpu")

    def forward(self, images: Tensor) -> tuple[Tensor, Tensor]:
        grid, glob = self.module(images)
        return grid, glob


class ScriptedTextEncoder(TextEncoder):
    def __init__(self, path: str, token_dim: int, embed_dim: int):
        super().__init__()
        self.token_dim = token_dim
        self.embed_dim = embed_dim
        self.module = torch.jit.load(path, map_location="cpu")

    def forward(self, audio_token: Tensor) -> Tensor:
        return self.module(audio_token)


class ScriptedDecoder(MaskDecoder):
    def __init__(self, path: str):
        super().__init__()
        self.module = torch.jit.load(path, map_location="cpu")

    def forward_pairs(self, grid: Tensor, cond: Tensor, out_size: int) -> Tensor:
        return self.module(grid, cond, out_size)


class ScriptedAudioBackbone(AudioBackbone):
    def __init__(self, path: str, out_dim: int):
        super().__init__()
        self.out_dim = out_dim
        self.module = torch.jit.load(path, map_location="cpu")

    def forward(self, spect: Tensor) -> Tensor:
        return self.module(spect)


FROZEN_COMPONENTS = ("visual", "text", "decoder")
TRAINABLE_COMPONENTS = ("audio_backbone", "audio_projection", "audio_pool")


@dataclass
class EncoderBundle:
    """The assembled network plus freeze bookkeeping.

    Frozen components never receive gradients and are kept in eval mode;
    only the audio branch trains (the backbone optionally frozen too).
    """

    visual: VisualEncoder
    text: TextEncoder
    decoder: MaskDecoder
    audio_backbone: AudioBackbone
    audio_projection: AudioProjection
    audio_pool: AttentivePool
    image_size: int
    freeze_audio_backbone: bool = False

    def __post_init__(self) -> None:
        for name in FROZEN_COMPONENTS:
            module = getattr(self, name)
            module.requires_grad_(False)
            module.eval()
        if self.freeze_audio_backbone:
            self.audio_backbone.requires_grad_(False)

    @property
    def grid_size(self) -> int:
        return self.image_size // self.visual.patch_size

    def trainable_modules(self) -> dict[str, nn.Module]:
        mods = {"audio_projection": self.audio_projection, "audio_pool": self.audio_pool}
        if not self.freeze_audio_backbone:
            mods["audio_backbone"] = self.audio_backbone
        return mods

    def trainable_parameters(self) -> Iterator[nn.Parameter]:
        for module in self.trainable_modules().values():
            yield from module.parameters()

    def audio_state(self) -> dict:
        return {
            name: getattr(self, name).state_dict()
            for name in TRAINABLE_COMPONENTS
        }

    def load_audio_state(self, state: dict) -> None:
        for name in TRAINABLE_COMPONENTS:
            getattr(self, name).load_state_dict(state[name])

    def frozen_hashes(self) -> dict[str, str]:
        return {name: module_hash(getattr(self, name)) for name in FROZEN_COMPONENTS}

    def to(self, dtype: torch.dtype) -> "EncoderBundle":
        for name in FROZEN_COMPONENTS + TRAINABLE_COMPONENTS:
            getattr(self, name).to(dtype)
        return self


def module_hash(module: nn.Module) -> str:
    """Content hash over a module's state dict, stable across loads."""
    h = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().to(torch.float32).cpu().numpy().tobytes())
    return h.hexdigest()[:16]

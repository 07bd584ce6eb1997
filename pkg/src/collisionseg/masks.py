"""Mask, box, and image value types plus the deterministic geometry ops.

Everything here is a pure function on immutable inputs; the arrays inside
the value types are marked read-only so instances can be shared freely
across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel {0,1} mask, shape (H, W)."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.grid)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ValueError(f"mask grid must be 2-D and non-empty, got shape {g.shape}")
        if g.dtype != np.uint8:
            vals = np.unique(g)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError("binary mask values must be 0 or 1")
            g = g.astype(np.uint8)
        elif g.size and g.max() > 1:
            raise ValueError("binary mask values must be 0 or 1")
        object.__setattr__(self, "grid", _freeze(g))

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_bool(cls, arr: np.ndarray) -> "BinaryMask":
        return cls(np.asarray(arr, dtype=bool).astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape  # type: ignore[return-value]

    def area(self) -> int:
        return int(self.grid.sum())

    def is_empty(self) -> bool:
        return not self.grid.any()


@dataclass(frozen=True)
class SoftMask:
    """Per-pixel confidence map in [0, 1], shape (H, W)."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=np.float32)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ValueError(f"mask grid must be 2-D and non-empty, got shape {g.shape}")
        if not np.isfinite(g).all():
            raise ValueError("soft mask contains non-finite values")
        if g.min() < 0.0 or g.max() > 1.0:
            raise ValueError("soft mask values must lie in [0, 1]")
        object.__setattr__(self, "grid", _freeze(g))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, exclusive upper bounds."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"box coordinates must be non-negative: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"box must have positive extent: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    def within(self, height: int, width: int) -> bool:
        return self.x_max <= width and self.y_max <= height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def to_mask(self, height: int, width: int) -> BinaryMask:
        """Filled-box mask on a (height, width) canvas."""
        g = np.zeros((height, width), dtype=np.uint8)
        g[self.y_min : self.y_max, self.x_min : self.x_max] = 1
        return BinaryMask(g)


@dataclass(frozen=True)
class Image:
    """RGB image, channels-first float32 array of shape (3, H, W) in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.pixels, dtype=np.float32)
        if p.ndim != 3 or p.shape[0] != 3:
            raise ValueError(f"image must have shape (3, H, W), got {p.shape}")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "pixels", _freeze(p))

    @classmethod
    def from_uint8(cls, hwc: np.ndarray) -> "Image":
        """Build from an (H, W, 3) uint8 array."""
        return cls(np.transpose(hwc, (2, 0, 1)).astype(np.float32) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.transpose(self.pixels, (1, 2, 0)) * 255.0, 0, 255).astype(np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def crop(self, box: BBox) -> "Image":
        if not box.within(self.height, self.width):
            raise ValueError(f"crop box {box} exceeds image {self.height}x{self.width}")
        return Image(self.pixels[:, box.y_min : box.y_max, box.x_min : box.x_max])


def _check_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection-over-union of two same-shape masks.

    Two empty masks score 0, never 1: evaluation must not reward
    predicting nothing against nothing.
    """
    _check_same_shape(a, b)
    inter = int(np.logical_and(a.grid, b.grid).sum())
    union_ = int(np.logical_or(a.grid, b.grid).sum())
    if union_ == 0:
        return 0.0
    return inter / union_


def mask_distance(a: BinaryMask, b: BinaryMask) -> float:
    """Minimum Euclidean distance between any foreground pixels of a and b.

    0.0 when the masks share at least one pixel.  If either mask is empty
    the distance is undefined and +inf is returned so callers never select
    such a pair.
    """
    _check_same_shape(a, b)
    if a.is_empty() or b.is_empty():
        return math.inf
    if np.logical_and(a.grid, b.grid).any():
        return 0.0
    # Exact Euclidean distance to the nearest foreground pixel of a,
    # sampled at the foreground pixels of b.
    dist_to_a = ndimage.distance_transform_edt(1 - a.grid)
    return float(dist_to_a[b.grid.astype(bool)].min())


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Elementwise OR of two same-shape masks."""
    _check_same_shape(a, b)
    return BinaryMask(np.logical_or(a.grid, b.grid).astype(np.uint8))


def binarize(m: SoftMask, threshold: float) -> BinaryMask:
    """Threshold a soft mask; pixels >= threshold (inclusive) become 1."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryMask((m.grid >= threshold).astype(np.uint8))


def peak_crop_box(m: SoftMask, crop_frac: float) -> BBox:
    """Square box of side crop_frac * min(H, W) centred on the peak pixel.

    The box is translated, never shrunk, to stay inside the image so a
    second segmentation pass always sees a fixed-size crop.  Ties on the
    peak break to the first pixel in row-major order; a constant mask
    yields a box at the image centre.
    """
    if not 0.0 < crop_frac <= 1.0:
        raise ValueError(f"crop_frac must lie in (0, 1], got {crop_frac}")
    h, w = m.shape
    side = max(1, int(round(crop_frac * min(h, w))))
    g = m.grid
    if g.max() == g.min():
        py, px = h // 2, w // 2
    else:
        py, px = divmod(int(np.argmax(g)), w)
    x0 = min(max(px - side // 2, 0), w - side)
    y0 = min(max(py - side // 2, 0), h - side)
    return BBox(x0, y0, x0 + side, y0 + side)


def tight_bbox(m: BinaryMask) -> BBox | None:
    """Smallest box containing all foreground pixels; None for an empty mask."""
    if m.is_empty():
        return None
    rows = np.flatnonzero(m.grid.any(axis=1))
    cols = np.flatnonzero(m.grid.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def mask_to_rle(m: BinaryMask) -> str:
    """Row-major run-length encoding, first count covering 0s.

    An empty 2x2 mask encodes as "4"; an all-ones 2x2 mask as "0 4".
    """
    flat = m.grid.ravel()
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return " ".join(str(int(c)) for c in counts)


def rle_to_mask(rle: str, height: int, width: int) -> BinaryMask:
    """Inverse of :func:`mask_to_rle` for a known mask shape."""
    counts = [int(tok) for tok in rle.split()]
    if any(c < 0 for c in counts):
        raise ValueError(f"negative run length in {rle!r}")
    if sum(counts) != height * width:
        raise ValueError(f"run lengths sum to {sum(counts)}, expected {height * width}")
    flat = np.zeros(height * width, dtype=np.uint8)
    pos = 0
    for i, count in enumerate(counts):
        if i % 2 == 1:
            flat[pos : pos + count] = 1
        pos += count
    return BinaryMask(flat.reshape(height, width))


def save_mask_png(m: BinaryMask, path) -> None:
    """Persist as 8-bit single-channel PNG with values {0, 255}."""
    PILImage.fromarray(m.grid * np.uint8(255), mode="L").save(path)


def load_mask_png(path) -> BinaryMask:
    arr = np.asarray(PILImage.open(path).convert("L"))
    return BinaryMask((arr >= 128).astype(np.uint8))

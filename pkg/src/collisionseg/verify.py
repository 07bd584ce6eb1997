"""Candidate masks and the geometric collision-verification step.

Three candidates can enter verification: the audio-conditioned mask and
the refined left/right in-hand object masks.  Overlapping candidates are
merged, then either the closest pair (under a distance threshold) is
returned as the colliding objects, or a single mask is chosen by hand
priority: right, left, audio.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Optional, Protocol

import numpy as np
from scipy import ndimage

from collisionseg.masks import BBox, BinaryMask, Image, SoftMask, iou, mask_distance, union

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

# Candidate scan order; also fixes the pair order used during merging.
CANDIDATE_ORDER = ("av", "left", "right")
# Single-mask fallback priority (highest first).
SINGLE_PRIORITY = {"right": 4, "left": 2, "av": 1}
# Masks closer than this many pixels count as touching: sub-adjacency
# distance orderings are noise, so touching pairs tie and hand priority
# decides between them.
CONTACT_TOLERANCE = 3.0


@dataclass(frozen=True)
class AdapterCapabilities:
    """What an external adapter supports; the pipeline serialises calls
    to adapters that do not allow concurrency."""

    batched: bool = False
    concurrent: bool = False


@dataclass(frozen=True)
class HOIResult:
    """In-hand object boxes; either hand may be absent."""

    left: Optional[BBox] = None
    right: Optional[BBox] = None


class HandObjectDetector(Protocol):
    """Adapter contract for in-hand object detection.

    detect returns a mapping with optional 'left'/'right' raw boxes as
    (x_min, y_min, x_max, y_max); invalid boxes are dropped downstream.
    contact_box is an optional capability (may raise NotImplementedError).
    """

    capabilities: AdapterCapabilities

    def detect(self, image: Image, record=None) -> Mapping[str, Optional[tuple]]: ...

    def contact_box(self, image: Image, record=None) -> Optional[tuple]: ...


class BoxPromptSegmenter(Protocol):
    """Adapter contract for box-promptable segmentation."""

    capabilities: AdapterCapabilities

    def segment(self, image: Image, box: BBox, record=None) -> BinaryMask: ...


class NullDetector:
    """Detector stub: never sees hands."""

    capabilities = AdapterCapabilities()

    def detect(self, image: Image, record=None) -> Mapping[str, Optional[tuple]]:
        return {}

    def contact_box(self, image: Image, record=None) -> Optional[tuple]:
        raise NotImplementedError("contact prediction not supported")


class OracleDetector:
    """Reads planted in-hand boxes from the sample record."""

    capabilities = AdapterCapabilities(concurrent=True)

    def detect(self, image: Image, record=None) -> Mapping[str, Optional[tuple]]:
        if record is None or record.hand_boxes is None:
            return {}
        return {hand: box for hand, box in record.hand_boxes.items() if box is not None}

    def contact_box(self, image: Image, record=None) -> Optional[tuple]:
        if record is None:
            return None
        return record.contact_box


class BoxFillSegmenter:
    """Trivial segmenter: the prompt box itself, filled."""

    capabilities = AdapterCapabilities(concurrent=True)

    def segment(self, image: Image, box: BBox, record=None) -> BinaryMask:
        return box.to_mask(image.height, image.width)


class OracleSegmenter:
    """Returns the ground-truth mask that best overlaps the prompt box."""

    capabilities = AdapterCapabilities(concurrent=True)

    def segment(self, image: Image, box: BBox, record=None) -> BinaryMask:
        empty = BinaryMask.zeros(image.height, image.width)
        if record is None or not record.gt_masks:
            return empty
        from collisionseg.manifest import decode_gt_masks

        best, best_inter = empty, 0
        for mask in decode_gt_masks(record):
            inter = int(mask.grid[box.y_min : box.y_max, box.x_min : box.x_max].sum())
            if inter > best_inter:
                best, best_inter = mask, inter
        return best


def sanitize_box(coords: tuple, height: int, width: int) -> Optional[BBox]:
    """Clip a raw (x0, y0, x1, y1) box into the image; None if degenerate."""
    x0, y0, x1, y1 = (int(round(v)) for v in coords)
    x0, x1 = max(x0, 0), min(x1, width)
    y0, y1 = max(y0, 0), min(y1, height)
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1, y1)


def detect_hands(image: Image, detector: HandObjectDetector, record=None) -> HOIResult:
    """Run a detector and sanitise its output.

    Detector failure degrades to an empty result (the pipeline then runs
    audio-only); malformed or out-of-bounds boxes are dropped with a
    warning.
    """
    try:
        raw = detector.detect(image, record)
    except Exception:
        log.warning("hand-object detector failed; continuing without hands", exc_info=True)
        return HOIResult()
    boxes: dict[str, BBox] = {}
    for hand in ("left", "right"):
        coords = raw.get(hand)
        if coords is None:
            continue
        box = sanitize_box(coords, image.height, image.width)
        if box is None:
            log.warning("dropping malformed %s-hand box %s", hand, coords)
            continue
        boxes[hand] = box
    return HOIResult(left=boxes.get("left"), right=boxes.get("right"))


def refine_with_segmenter(
    image: Image, prompt: BBox, segmenter: BoxPromptSegmenter, record=None
) -> BinaryMask:
    """Box prompt -> mask; an empty segmenter output falls back to the
    filled prompt box."""
    if not prompt.within(image.height, image.width):
        raise ValueError(f"prompt box {prompt} exceeds image {image.height}x{image.width}")
    mask = segmenter.segment(image, prompt, record)
    if mask.is_empty():
        return prompt.to_mask(image.height, image.width)
    return mask


def bbox_of_peak_region(m: SoftMask) -> BBox:
    """Tight box of the half-max connected component around the peak.

    Pixels at or above half the maximum are grouped with 8-connectivity;
    the component containing the (row-major first) argmax wins.
    """
    g = m.grid
    h, w = g.shape
    peak = float(g.max())
    region = g >= 0.5 * peak
    labels, _ = ndimage.label(region, structure=EIGHT_CONNECTED)
    py, px = divmod(int(np.argmax(g)), w)
    component = labels == labels[py, px]
    rows = np.flatnonzero(component.any(axis=1))
    cols = np.flatnonzero(component.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


@dataclass(frozen=True)
class CandidateSet:
    """Up to three same-shape candidate masks; empties count as absent."""

    m_av: Optional[BinaryMask] = None
    m_left: Optional[BinaryMask] = None
    m_right: Optional[BinaryMask] = None

    def __post_init__(self) -> None:
        present = self.present()
        if not present:
            raise ValueError("candidate set must contain at least one non-empty mask")
        shapes = {mask.shape for _, mask in present}
        if len(shapes) > 1:
            raise ValueError(f"candidate masks disagree on shape: {shapes}")

    def present(self) -> list[tuple[str, BinaryMask]]:
        out = []
        for name in CANDIDATE_ORDER:
            mask = getattr(self, f"m_{name}")
            if mask is not None and not mask.is_empty():
                out.append((name, mask))
        return out


@dataclass(frozen=True)
class CollisionPrediction:
    """Final 1 or 2 masks with a provenance tag per mask."""

    masks: tuple[BinaryMask, ...]
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.masks) <= 2:
            raise ValueError(f"prediction must hold 1 or 2 masks, got {len(self.masks)}")
        if len(self.masks) != len(self.provenance):
            raise ValueError("one provenance tag per mask required")
        if any(m.is_empty() for m in self.masks):
            raise ValueError("predicted masks must be non-empty")


def _tag(names: frozenset[str]) -> str:
    return "merged" if len(names) > 1 else next(iter(names))


def _priority(names: frozenset[str]) -> int:
    return max(SINGLE_PRIORITY[n] for n in names)


def _pair_priority(a: frozenset[str], b: frozenset[str]) -> int:
    return _priority(a) + _priority(b)


def verify_collision(candidates: CandidateSet, alpha: float, beta: float) -> CollisionPrediction:
    """Select the final colliding mask(s) from the candidate set.

    1. Merge (union) any pair with IoU >= alpha, repeating in the fixed
       pair order av-left, av-right, left-right until no pair qualifies.
    2. With two or more candidates left, pick the pair at minimum mask
       distance if that distance is < beta.  Distances at or below the
       contact tolerance are treated as 0 (the masks touch), and tied
       pairs resolve toward the higher combined hand priority, mirroring
       the single-mask priority order.
    3. Otherwise return one mask by priority right, left, av.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if beta < 0.0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    pool: list[tuple[frozenset[str], BinaryMask]] = [
        (frozenset([name]), mask) for name, mask in candidates.present()
    ]

    # Merge to fixpoint, rescanning from the start after every union.
    merged = True
    while merged and len(pool) > 1:
        merged = False
        for i, j in combinations(range(len(pool)), 2):
            if iou(pool[i][1], pool[j][1]) >= alpha:
                names = pool[i][0] | pool[j][0]
                pool[i] = (names, union(pool[i][1], pool[j][1]))
                del pool[j]
                merged = True
                break

    if len(pool) == 1:
        names, mask = pool[0]
        return CollisionPrediction(masks=(mask,), provenance=(_tag(names),))

    best: tuple[float, int, int, int] | None = None
    for i, j in combinations(range(len(pool)), 2):
        dist = mask_distance(pool[i][1], pool[j][1])
        if dist <= CONTACT_TOLERANCE:
            dist = 0.0
        key = (dist, -_pair_priority(pool[i][0], pool[j][0]), i, j)
        if best is None or key < best:
            best = key
    assert best is not None
    dist, _, i, j = best
    if dist < beta:
        return CollisionPrediction(
            masks=(pool[i][1], pool[j][1]),
            provenance=(_tag(pool[i][0]), _tag(pool[j][0])),
        )

    names, mask = max(pool, key=lambda item: _priority(item[0]))
    return CollisionPrediction(masks=(mask,), provenance=(_tag(names),))

"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the documented contracts
with different algorithms than the library (pixel loops, cdist, exhaustive
enumeration) so agreement is meaningful.
"""

from __future__ import annotations

from itertools import combinations, permutations

import numpy as np
from scipy.spatial.distance import cdist


def ref_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = 0
    union = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        if x and y:
            inter += 1
        if x or y:
            union += 1
    if union == 0:
        return 0.0
    return inter / union


def ref_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Brute-force min distance over all foreground pixel pairs."""
    pa = np.argwhere(a > 0)
    pb = np.argwhere(b > 0)
    if len(pa) == 0 or len(pb) == 0:
        return float("inf")
    return float(cdist(pa, pb).min())


ORDER = ("av", "left", "right")
PRIORITY = {"right": 4, "left": 2, "av": 1}
CONTACT = 3.0


def ref_verify(cands: dict[str, np.ndarray], alpha: float, beta: float):
    """Reference collision verification.

    Returns (list of mask arrays, list of provenance name-sets), following
    the documented rules: merge IoU >= alpha pairs to fixpoint in the
    fixed order, pick the closest pair under beta with distances at or
    below the contact tolerance collapsing to zero (ties to higher hand
    priority), else the single highest-priority candidate.
    """
    pool = [({name}, cands[name].copy()) for name in ORDER if name in cands and cands[name].any()]
    if not pool:
        raise ValueError("no candidates")

    changed = True
    while changed and len(pool) > 1:
        changed = False
        for i, j in combinations(range(len(pool)), 2):
            if ref_iou(pool[i][1], pool[j][1]) >= alpha:
                merged = ((pool[i][1] > 0) | (pool[j][1] > 0)).astype(np.uint8)
                pool[i] = (pool[i][0] | pool[j][0], merged)
                del pool[j]
                changed = True
                break

    if len(pool) == 1:
        return [pool[0][1]], [pool[0][0]]

    def prio(names):
        return max(PRIORITY[n] for n in names)

    best_key, best_pair = None, None
    for i, j in combinations(range(len(pool)), 2):
        d = ref_distance(pool[i][1], pool[j][1])
        if d <= CONTACT:
            d = 0.0
        key = (d, -(prio(pool[i][0]) + prio(pool[j][0])), i, j)
        if best_key is None or key < best_key:
            best_key, best_pair = key, (i, j)
    assert best_pair is not None
    if best_key[0] < beta:
        i, j = best_pair
        return [pool[i][1], pool[j][1]], [pool[i][0], pool[j][0]]

    names, mask = max(pool, key=lambda item: prio(item[0]))
    return [mask], [names]


def ref_match_all_optima(preds: list[np.ndarray], gts: list[np.ndarray]):
    """All per-GT IoU vectors achievable by a total-IoU-maximising
    assignment, via exhaustive permutation with empty-mask padding."""
    n = max(len(preds), len(gts))
    if n == 0:
        return [[]]
    padded_preds = list(preds) + [None] * (n - len(preds))
    padded_gts = list(gts) + [None] * (n - len(gts))

    def pair_iou(p, g):
        if p is None or g is None:
            return 0.0
        return ref_iou(p, g)

    best_total = -1.0
    optima = []
    for perm in permutations(range(n)):
        total = sum(pair_iou(padded_preds[i], padded_gts[j]) for j, i in enumerate(perm))
        per_gt = [pair_iou(padded_preds[perm[j]], padded_gts[j]) for j in range(len(gts))]
        if total > best_total + 1e-12:
            best_total = total
            optima = [per_gt]
        elif abs(total - best_total) <= 1e-12:
            optima.append(per_gt)
    return optima


def ref_connected_component_box(grid: np.ndarray, seed_yx: tuple[int, int]):
    """BFS flood fill with 8-connectivity; returns the tight box of the
    component containing the seed."""
    h, w = grid.shape
    sy, sx = seed_yx
    seen = {(sy, sx)}
    stack = [(sy, sx)]
    while stack:
        y, x = stack.pop()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and grid[ny, nx] and (ny, nx) not in seen:
                    seen.add((ny, nx))
                    stack.append((ny, nx))
    ys = [y for y, _ in seen]
    xs = [x for _, x in seen]
    return min(xs), min(ys), max(xs) + 1, max(ys) + 1


def random_candidate_set(rng: np.random.Generator, size: int = 32) -> dict[str, np.ndarray]:
    """Random blobs for verification trials; any subset of candidates may
    be present or empty."""
    cands = {}
    for name in ORDER:
        roll = rng.random()
        if roll < 0.2:
            continue
        mask = np.zeros((size, size), dtype=np.uint8)
        if roll < 0.3:
            cands[name] = mask  # present but empty
            continue
        n_blobs = int(rng.integers(1, 3))
        for _ in range(n_blobs):
            cy, cx = rng.integers(0, size, 2)
            r = int(rng.integers(2, max(3, size // 4)))
            yy, xx = np.mgrid[0:size, 0:size]
            mask |= ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.uint8)
        cands[name] = mask
    return cands


def random_blob_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=np.uint8)
    if rng.random() < 0.15:
        return mask
    cy, cx = rng.integers(0, size, 2)
    r = int(rng.integers(1, max(2, size // 3)))
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.uint8)

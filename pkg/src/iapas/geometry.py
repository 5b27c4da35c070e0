"""Pure box and mask algebra: areas, IoU, NMS, size filtering, score aggregation.

All functions are side-effect free and safe for concurrent use.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .types import BinaryMask, BoundingBox, Detection, MaskSet, ScoreMap, SizeThreshold


def box_area(box: BoundingBox) -> float:
    """Area fraction of a normalized box: (x1-x0)*(y1-y0)."""
    return (box.x1 - box.x0) * (box.y1 - box.y0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    if ix0 >= ix1 or iy0 >= iy1:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    union = box_area(a) + box_area(b) - inter
    return inter / union


def nms(detections: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Detections are visited in descending score (ties broken by original
    index, lower first); one is kept iff its IoU with every previously
    kept detection is strictly below ``iou_threshold``. The output
    preserves that descending-score order, so the result is fully
    deterministic for any input ordering.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0,1], got {iou_threshold}")
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: list[Detection] = []
    for index in order:
        candidate = detections[index]
        if all(iou(candidate.box, k.box) < iou_threshold for k in kept):
            kept.append(candidate)
    return kept


def filter_by_size(
    detections: Sequence[Detection], threshold: SizeThreshold
) -> list[Detection]:
    """Keep exactly the detections whose box area is strictly below the threshold.

    A box exactly at the threshold is removed; input order is preserved.
    """
    return [d for d in detections if box_area(d.box) < threshold.value]


def _mask_digest(mask: BinaryMask) -> str:
    return hashlib.sha256(mask.bits.tobytes()).hexdigest()


def aggregate_scores(mask_set: MaskSet, width: int, height: int) -> ScoreMap:
    """Fuse per-box masks into one anomaly score map.

    Each pixel receives the sum of the confidence scores of every mask
    covering it, clamped to 1.0. The per-pixel sum is evaluated as
    sequential float64 additions over the masks in ascending
    (score, mask-content-digest) order before rounding to float32, which
    makes the result bit-identical under any permutation of the input
    masks.
    """
    for mask in mask_set.masks:
        if mask.width != width or mask.height != height:
            raise ValueError(
                f"mask dimensions {mask.width}x{mask.height} do not match "
                f"target {width}x{height}"
            )
    accumulator = np.zeros((height, width), dtype=np.float64)
    order = sorted(
        range(len(mask_set.masks)),
        key=lambda i: (mask_set.source_detections[i].score, _mask_digest(mask_set.masks[i])),
    )
    for index in order:
        score = float(mask_set.source_detections[index].score)
        accumulator += score * mask_set.masks[index].bits.astype(np.float64)
    np.clip(accumulator, 0.0, 1.0, out=accumulator)
    return ScoreMap(width=width, height=height, values=accumulator.astype(np.float32))

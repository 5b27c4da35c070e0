"""Pixel-level precision/recall metrics over pooled score maps.

All pixels of a category are pooled into one vector before the sweep;
categories are never weighted by pixel count when averaged. The sweep
visits each distinct score value once, descending, predicting positive
at ``score >= threshold``. Tied scores therefore enter together, never
split across operating points.

Metrics are computed in float64 with a pinned arithmetic order, so equal
inputs give bit-equal outputs on every platform:

* precision_k = TP_k / (TP_k + FP_k), recall_k = TP_k / positives
* AP = sum over k of (recall_k - recall_{k-1}) * precision_k, recall_0 = 0
* F1_k = 2 * precision_k * recall_k / (precision_k + recall_k), defined
  as 0 where precision + recall == 0; F1-max is the maximum over k.

An optional histogram mode quantizes scores into fixed-width bins over
[0, 1] (10000 by default), trading exactness for O(bins) memory on very
large pools.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MetricsError
from .types import BinaryMask, ScoreMap

HISTOGRAM_BINS = 10_000


@dataclass(frozen=True)
class PixelPool:
    """Flat score/label vectors pooled across images."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise MetricsError(
                f"pool shape mismatch: scores {self.scores.shape}, labels {self.labels.shape}"
            )

    @property
    def pixels(self) -> int:
        return int(self.scores.size)

    @property
    def positives(self) -> int:
        return int(np.count_nonzero(self.labels))

    @staticmethod
    def from_pair(score_map: ScoreMap, gt_mask: BinaryMask) -> "PixelPool":
        if (score_map.width, score_map.height) != (gt_mask.width, gt_mask.height):
            raise MetricsError(
                f"score map {score_map.width}x{score_map.height} does not match "
                f"mask {gt_mask.width}x{gt_mask.height}"
            )
        return PixelPool(
            scores=score_map.values.reshape(-1).astype(np.float64),
            labels=gt_mask.bits.reshape(-1).copy(),
        )

    def merge(self, other: "PixelPool") -> "PixelPool":
        return PixelPool(
            scores=np.concatenate([self.scores, other.scores]),
            labels=np.concatenate([self.labels, other.labels]),
        )


def pool_pixels(pairs: Iterable[tuple[ScoreMap, BinaryMask]]) -> PixelPool:
    """Pool (score map, ground truth) pairs into one vector, in iteration order."""
    pools = [PixelPool.from_pair(score_map, mask) for score_map, mask in pairs]
    if not pools:
        raise MetricsError("nothing to pool: no (score map, mask) pairs")
    return PixelPool(
        scores=np.concatenate([p.scores for p in pools]),
        labels=np.concatenate([p.labels for p in pools]),
    )


@dataclass(frozen=True)
class MetricReport:
    ap: float
    f1_max: float
    pixels: int
    positives: int


def _curve(pool: PixelPool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-distinct-threshold (thresholds, precision, recall), descending."""
    positives = pool.positives
    if positives == 0:
        raise MetricsError("undefined: no positive pixels in pool")
    order = np.argsort(-pool.scores, kind="stable")
    sorted_scores = pool.scores[order]
    sorted_labels = pool.labels[order].astype(np.float64)
    tp_cum = np.cumsum(sorted_labels)
    # Last index of each tie group = an operating point.
    boundary = np.r_[np.nonzero(np.diff(sorted_scores))[0], sorted_scores.size - 1]
    tp = tp_cum[boundary]
    predicted = boundary.astype(np.float64) + 1.0
    precision = tp / predicted
    recall = tp / float(positives)
    return sorted_scores[boundary], precision, recall


def pr_curve(pool: PixelPool) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) triples, thresholds descending."""
    thresholds, precision, recall = _curve(pool)
    return [
        (float(t), float(p), float(r))
        for t, p, r in zip(thresholds, precision, recall)
    ]


def average_precision(pool: PixelPool) -> float:
    _, precision, recall = _curve(pool)
    deltas = np.diff(np.r_[0.0, recall])
    return float(np.sum(deltas * precision))


def f1_max(pool: PixelPool) -> float:
    _, precision, recall = _curve(pool)
    denom = precision + recall
    f1 = np.zeros_like(denom)
    np.divide(2.0 * precision * recall, denom, out=f1, where=denom > 0)
    return float(np.max(f1))


def _histogram_curve(pool: PixelPool, bins: int) -> tuple[np.ndarray, np.ndarray]:
    positives = pool.positives
    if positives == 0:
        raise MetricsError("undefined: no positive pixels in pool")
    if bins < 2:
        raise MetricsError(f"histogram bins must be >= 2, got {bins}")
    if np.any(pool.scores < 0.0) or np.any(pool.scores > 1.0):
        raise MetricsError("histogram mode requires scores in [0, 1]")
    idx = np.minimum((pool.scores * bins).astype(np.int64), bins - 1)
    pos_hist = np.bincount(idx[pool.labels != 0], minlength=bins).astype(np.float64)
    all_hist = np.bincount(idx, minlength=bins).astype(np.float64)
    # Sweep from the top bin down; cumulative counts at/above each bin.
    tp = np.cumsum(pos_hist[::-1])
    predicted = np.cumsum(all_hist[::-1])
    occupied = predicted > 0
    precision = np.zeros(bins)
    np.divide(tp, predicted, out=precision, where=occupied)
    recall = tp / float(positives)
    return precision[occupied], recall[occupied]


def average_precision_histogram(pool: PixelPool, bins: int = HISTOGRAM_BINS) -> float:
    precision, recall = _histogram_curve(pool, bins)
    deltas = np.diff(np.r_[0.0, recall])
    return float(np.sum(deltas * precision))


def f1_max_histogram(pool: PixelPool, bins: int = HISTOGRAM_BINS) -> float:
    precision, recall = _histogram_curve(pool, bins)
    denom = precision + recall
    f1 = np.zeros_like(denom)
    np.divide(2.0 * precision * recall, denom, out=f1, where=denom > 0)
    return float(np.max(f1))


def evaluate_pool(pool: PixelPool, histogram_bins: int | None = None) -> MetricReport:
    """AP and F1-max for one pooled category."""
    if histogram_bins is None:
        ap = average_precision(pool)
        f1 = f1_max(pool)
    else:
        ap = average_precision_histogram(pool, histogram_bins)
        f1 = f1_max_histogram(pool, histogram_bins)
    return MetricReport(ap=ap, f1_max=f1, pixels=pool.pixels, positives=pool.positives)


def evaluate_category(
    pairs: Iterable[tuple[ScoreMap, BinaryMask]],
    histogram_bins: int | None = None,
) -> MetricReport:
    return evaluate_pool(pool_pixels(pairs), histogram_bins=histogram_bins)


@dataclass(frozen=True)
class DatasetReport:
    """Unweighted mean over categories plus the per-category breakdown."""

    mean_ap: float
    mean_f1_max: float
    per_category: tuple[tuple[str, MetricReport], ...]


def evaluate_dataset(reports: Sequence[tuple[str, MetricReport]]) -> DatasetReport:
    if not reports:
        raise MetricsError("no category reports to aggregate")
    aps = np.array([report.ap for _, report in reports], dtype=np.float64)
    f1s = np.array([report.f1_max for _, report in reports], dtype=np.float64)
    return DatasetReport(
        mean_ap=float(np.mean(aps)),
        mean_f1_max=float(np.mean(f1s)),
        per_category=tuple(reports),
    )

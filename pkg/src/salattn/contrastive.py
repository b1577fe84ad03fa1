"""Region-level contrastive learning with hard example mining.

Each frame contributes up to two region features: the foreground and the
background of its ground-truth mask, average-pooled over the head feature
map and L2-normalized. Mining ranks candidates by how badly the current
prediction fits the region (mean absolute error inside it, higher is
harder); ties break on frame index ascending so the ranking is total.

The loss is the grouped InfoNCE

    L = -log( sum_p exp(u.u_p / tau) /
              (sum_p exp(u.u_p / tau) + sum_n exp(u.u_n / tau)) )

computed as logsumexp(all) - logsumexp(positives), which is exact and
stable (the max shift is a constant with no gradient of its own).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .ops import EmptyRegionError, masked_avg_pool
from .tensor import Tensor

FOREGROUND = "foreground"
BACKGROUND = "background"


@dataclass
class RegionFeature:
    """A pooled, unit-norm region descriptor plus its mining score."""

    video_id: str
    frame_idx: int
    polarity: str   # FOREGROUND or BACKGROUND
    vec: Tensor     # (c,), L2-normalized
    score: float    # region MAE of the current prediction, in [0, 1]

    def __post_init__(self):
        if self.polarity not in (FOREGROUND, BACKGROUND):
            raise ValueError(f"unknown polarity {self.polarity!r}")


class DegenerateBatchWarning(UserWarning):
    """Fewer mining candidates than requested; all of them were used."""


def region_mae(pred: np.ndarray, gt: np.ndarray, region: np.ndarray) -> float:
    """Mean |pred - gt| over the pixels where region is nonzero."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if pred.shape != gt.shape or pred.shape != region.shape:
        raise ValueError(f"shape mismatch: {pred.shape}, {gt.shape}, {region.shape}")
    n = int(region.sum())
    if n == 0:
        raise EmptyRegionError("region_mae: empty region")
    return float(np.abs(pred - gt)[region].sum() / n)


def downsample_mask(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Nearest-neighbour mask reduction to (h, w), sampling pixel centers."""
    m = np.asarray(mask, dtype=np.float64)
    hh, ww = m.shape
    if hh % h or ww % w:
        raise ValueError(f"mask {m.shape} is not an integer multiple of ({h}, {w})")
    sy, sx = hh // h, ww // w
    return m[sy // 2::sy, sx // 2::sx][:h, :w].copy()


def extract_region_features(feat: Tensor, gt_mask: np.ndarray, pred: np.ndarray,
                            video_id: str, frame_idx: int) -> list:
    """Foreground and background features of one frame.

    feat is the (h, w, c) head feature map; gt_mask and pred are full
    resolution. Pooling masks come from nearest-neighbour reduction of the
    ground truth; mining scores are measured at full resolution. A polarity
    whose region is empty (at either resolution) is omitted, as is the
    pathological case of an exactly zero pooled vector.
    """
    h, w, _ = feat.shape
    gt = np.asarray(gt_mask, dtype=np.float64)
    small = downsample_mask(gt, h, w)
    out = []
    for polarity, pool_mask, full_region in (
            (FOREGROUND, small, gt > 0.5),
            (BACKGROUND, 1.0 - small, gt <= 0.5)):
        if full_region.sum() == 0 or pool_mask.sum() == 0:
            continue
        try:
            vec = T.l2_normalize(masked_avg_pool(feat, pool_mask))
        except ValueError:
            continue   # zero pooled vector, nothing to normalize
        score = region_mae(pred, gt, full_region)
        out.append(RegionFeature(video_id, frame_idx, polarity, vec, score))
    return out


def mine_hard_samples(candidates, k: int) -> list:
    """Top-k candidates by score descending, ties by frame index ascending.

    An empty candidate list yields an empty result; the caller decides
    whether a loss is still computable.
    """
    candidates = list(candidates)
    if not candidates:
        return []
    if k < 1:
        raise ValueError(f"mine_hard_samples: k must be positive, got {k}")
    polarity = candidates[0].polarity
    for c in candidates:
        if c.polarity != polarity:
            raise ValueError("mine_hard_samples: mixed polarities")
    ranked = sorted(candidates, key=lambda c: (-c.score, c.frame_idx))
    return ranked[:k]


@dataclass
class ContrastiveBatch:
    """One anchor with mined positives and negatives."""

    anchor: RegionFeature
    positives: list
    negatives: list

    def __post_init__(self):
        if self.anchor.polarity != FOREGROUND:
            raise ValueError("anchor must be a foreground region")
        if not self.positives or not self.negatives:
            raise ValueError("need at least one positive and one negative")
        for p in self.positives:
            if p.polarity != FOREGROUND:
                raise ValueError("positives must be foreground regions")
            if p.video_id != self.anchor.video_id:
                raise ValueError("positives must come from the anchor's video")
            if p.frame_idx == self.anchor.frame_idx:
                raise ValueError("positives must come from other frames")
        for n in self.negatives:
            if n.polarity != BACKGROUND:
                raise ValueError("negatives must be background regions")
            if n.video_id != self.anchor.video_id:
                raise ValueError("negatives must come from the anchor's video")


def build_contrastive_batches(features, k_pos: int, k_neg: int) -> list:
    """One batch per foreground feature that has valid positives and negatives.

    Positives: foreground regions of other frames of the anchor's video.
    Negatives: background regions of any frame of the anchor's video, the
    anchor's own frame included. Anchors lacking either pool are skipped.
    When a pool is smaller than requested, everything available is used and
    a DegenerateBatchWarning is issued once.
    """
    features = list(features)
    batches = []
    for anchor in features:
        if anchor.polarity != FOREGROUND:
            continue
        pos_pool = [f for f in features
                    if f.polarity == FOREGROUND
                    and f.video_id == anchor.video_id
                    and f.frame_idx != anchor.frame_idx]
        neg_pool = [f for f in features
                    if f.polarity == BACKGROUND
                    and f.video_id == anchor.video_id]
        if not pos_pool or not neg_pool:
            continue
        if len(pos_pool) < k_pos or len(neg_pool) < k_neg:
            warnings.warn("mining pool smaller than requested k, using all candidates",
                          DegenerateBatchWarning)
        batches.append(ContrastiveBatch(
            anchor,
            mine_hard_samples(pos_pool, k_pos),
            mine_hard_samples(neg_pool, k_neg)))
    return batches


def infonce_loss(batch: ContrastiveBatch, tau: float) -> Tensor:
    """Grouped InfoNCE at temperature tau; strictly positive scalar."""
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    u = batch.anchor.vec
    pos = T.stack_rows([p.vec for p in batch.positives])
    neg = T.stack_rows([n.vec for n in batch.negatives])
    pos_logits = T.scale(T.matvec(pos, u), 1.0 / tau)
    neg_logits = T.scale(T.matvec(neg, u), 1.0 / tau)
    all_logits = T.concat([pos_logits, neg_logits], axis=0)
    return T.sub(T.logsumexp(all_logits), T.logsumexp(pos_logits))

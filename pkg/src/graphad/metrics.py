"""Evaluation metrics: image AUROC and average precision over image scores;
pixel AUROC and per-region overlap (PRO) over pixel maps and binary masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import label as ndimage_label
from scipy.stats import rankdata

from .errors import DegenerateLabelsError, DimensionError

EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass
class LabeledScores:
    scores: np.ndarray
    labels: np.ndarray  # 1 = anomalous

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.scores.shape != self.labels.shape:
            raise DimensionError("scores and labels differ in length")


def auroc(data: LabeledScores) -> float:
    """Tie-aware Mann-Whitney AUROC: P(pos > neg) + 0.5 P(pos == neg)."""
    pos = data.labels == 1
    n_pos = int(pos.sum())
    n_neg = data.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("AUROC needs at least one positive and one negative")
    ranks = rankdata(data.scores)  # mid-ranks for ties
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(data: LabeledScores) -> float:
    """AP = sum over descending thresholds of (R_n - R_{n-1}) * P_n, ties grouped."""
    n_pos = int((data.labels == 1).sum())
    if n_pos == 0:
        raise DegenerateLabelsError("average precision needs at least one positive")
    order = np.argsort(-data.scores, kind="stable")
    scores = data.scores[order]
    labels = data.labels[order]
    tp = np.cumsum(labels == 1)
    fp = np.cumsum(labels == 0)
    # keep only the last entry within each tie group (threshold = that score)
    last_in_group = np.r_[scores[1:] != scores[:-1], True]
    tp = tp[last_in_group].astype(np.float64)
    fp = fp[last_in_group].astype(np.float64)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev_recall = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev_recall) * precision))


def connected_components(mask: np.ndarray):
    """8-connectivity labeling with first-seen raster label order.

    Returns (label grid, count); background is 0.
    """
    mask = np.asarray(mask) != 0
    labels, count = ndimage_label(mask, structure=EIGHT_CONN)
    if count == 0:
        return labels, 0
    # normalize to first-seen order in a raster scan
    flat = labels.ravel()
    nonzero = flat[flat != 0]
    first_seen = nonzero[np.sort(np.unique(nonzero, return_index=True)[1])]
    remap = np.zeros(count + 1, dtype=labels.dtype)
    remap[first_seen] = np.arange(1, count + 1)
    return remap[labels], count


@dataclass
class MaskedMap:
    pixel_map: np.ndarray
    gt_mask: np.ndarray
    component_labels: np.ndarray = field(init=False)
    component_count: int = field(init=False)

    def __post_init__(self):
        self.pixel_map = np.asarray(self.pixel_map, dtype=np.float64)
        self.gt_mask = np.asarray(self.gt_mask) != 0
        if self.pixel_map.shape != self.gt_mask.shape:
            raise DimensionError(
                f"map shape {self.pixel_map.shape} != mask shape {self.gt_mask.shape}")
        self.component_labels, self.component_count = connected_components(self.gt_mask)


def pro(maps: list, fpr_limit: float = 0.3, thresholds: int = 200) -> float:
    """Per-region overlap integrated over pooled FPR in [0, fpr_limit].

    Thresholds form a global grid between the pooled min and max pixel score;
    at each threshold the mean per-component overlap is paired with the pooled
    false-positive rate, and the resulting curve (anchored at (0, 0)) is
    integrated by trapezoid and normalized by ``fpr_limit``.
    """
    if not maps:
        raise DegenerateLabelsError("PRO needs at least one map")
    total_components = sum(m.component_count for m in maps)
    if total_components == 0:
        raise DegenerateLabelsError("PRO needs at least one defect component")
    total_neg = sum(int((~m.gt_mask).sum()) for m in maps)
    if total_neg == 0:
        raise DegenerateLabelsError("PRO needs at least one anomaly-free pixel")
    gmin = min(m.pixel_map.min() for m in maps)
    gmax = max(m.pixel_map.max() for m in maps)
    grid = np.linspace(gmin, gmax, thresholds)
    fprs = np.empty(thresholds)
    overlaps = np.empty(thresholds)
    comp_sizes = [
        [(m.component_labels == c).sum() for c in range(1, m.component_count + 1)]
        for m in maps
    ]
    for t, thr in enumerate(grid):
        fp = 0
        comp_overlaps = []
        for m, sizes in zip(maps, comp_sizes):
            binarized = m.pixel_map >= thr
            fp += int((binarized & ~m.gt_mask).sum())
            for c, size in enumerate(sizes, start=1):
                hit = int((binarized & (m.component_labels == c)).sum())
                comp_overlaps.append(hit / size)
        fprs[t] = fp / total_neg
        overlaps[t] = float(np.mean(comp_overlaps))
    return integrate_pro_curve(fprs, overlaps, fpr_limit)


def integrate_pro_curve(fprs: np.ndarray, overlaps: np.ndarray, fpr_limit: float) -> float:
    """Normalized area under the (FPR, overlap) curve up to ``fpr_limit``."""
    pts = {0.0: 0.0}
    for f, o in zip(fprs, overlaps):
        pts[float(f)] = max(pts.get(float(f), 0.0), float(o))
    xs = np.array(sorted(pts))
    ys = np.array([pts[x] for x in xs])
    if xs[-1] < fpr_limit:  # curve never reaches the limit; extend flat
        xs = np.r_[xs, fpr_limit]
        ys = np.r_[ys, ys[-1]]
    y_at_limit = np.interp(fpr_limit, xs, ys)
    keep = xs <= fpr_limit
    xs = np.r_[xs[keep], fpr_limit]
    ys = np.r_[ys[keep], y_at_limit]
    return float(np.trapezoid(ys, xs) / fpr_limit)


@dataclass
class MetricsReport:
    image_auroc: float = float("nan")
    image_ap: float = float("nan")
    pixel_auroc: float = float("nan")
    pixel_pro: float = float("nan")

    def as_dict(self) -> dict:
        return {"image_auroc": self.image_auroc, "image_ap": self.image_ap,
                "pixel_auroc": self.pixel_auroc, "pixel_pro": self.pixel_pro}


def pixel_auroc(maps: list) -> float:
    """AUROC over all pixels of all maps pooled together."""
    scores = np.concatenate([m.pixel_map.ravel() for m in maps])
    labels = np.concatenate([m.gt_mask.ravel().astype(np.int64) for m in maps])
    return auroc(LabeledScores(scores, labels))

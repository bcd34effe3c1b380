"""Inference pipeline: per-node reconstruction residuals, pooled image score,
and the smoothed + bilinearly upsampled pixel map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .align import heads_forward, residual_scores
from .errors import ConfigError, DimensionError
from .gat import encoder_forward
from .graph import GridTopology, build_grid_topology
from .tokenio import PatchGrid

POOL_TOP_K_MEAN = "topk"
POOL_MAX = "max"


@dataclass
class ScoreConfig:
    top_ratio: float = 0.025
    image_pooling: str = POOL_TOP_K_MEAN
    blur_sigma: float = 1.0  # in patch units, applied to the coarse map
    output_rows: int = 0  # 0 = same as the patch grid
    output_cols: int = 0

    def validate(self):
        if not 0.0 < self.top_ratio <= 1.0:
            raise ConfigError(f"top_ratio must be in (0, 1], got {self.top_ratio}")
        if self.image_pooling not in (POOL_TOP_K_MEAN, POOL_MAX):
            raise ConfigError(f"unknown pooling {self.image_pooling!r}")
        if self.blur_sigma < 0:
            raise ConfigError(f"blur_sigma must be >= 0, got {self.blur_sigma}")
        return self


@dataclass
class AnomalyResult:
    patch_scores: np.ndarray  # (N,)
    image_score: float
    pixel_map: np.ndarray  # (output_rows, output_cols)


def patch_scores(query: PatchGrid, model, topo: GridTopology = None) -> np.ndarray:
    """Per-node residual scores, inference mode (no masking, no dropout)."""
    cfg = model.config
    if query.dim != cfg.encoder.input_dim:
        raise DimensionError(
            f"query dim {query.dim} != model input dim {cfg.encoder.input_dim}")
    if topo is None:
        topo = build_grid_topology(query.rows, query.cols)
    h_r, _ = encoder_forward(query, topo, model.encoder, cfg.encoder, training=False)
    z, zt, _ = heads_forward(query.data.astype(h_r.dtype, copy=False), h_r, model.heads)
    return residual_scores(z.astype(np.float64), zt.astype(np.float64), cfg.align)


def image_score(scores: np.ndarray, cfg: ScoreConfig) -> float:
    """Pool patch scores into one image score (top-ratio mean or max)."""
    cfg.validate()
    scores = np.asarray(scores)
    if scores.size == 0:
        raise DimensionError("cannot pool an empty score array")
    if cfg.image_pooling == POOL_MAX:
        return float(scores.max())
    k = max(1, int(np.floor(cfg.top_ratio * scores.size + 0.5)))
    top = np.partition(scores, scores.size - k)[scores.size - k:]
    return float(top.mean())


def gaussian_blur_grid(grid_map: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), reflect padding."""
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    grid_map = np.asarray(grid_map, dtype=np.float64)
    if sigma == 0:
        return grid_map.copy()
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    out = correlate1d(grid_map, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def bilinear_upsample(grid_map: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Half-pixel-center bilinear resampling: src = (dst+0.5)*in/out - 0.5."""
    grid_map = np.asarray(grid_map, dtype=np.float64)
    in_rows, in_cols = grid_map.shape
    if out_rows < in_rows or out_cols < in_cols:
        raise DimensionError(
            f"output dims ({out_rows}, {out_cols}) smaller than input "
            f"({in_rows}, {in_cols})")

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = src - i0
        return i0, i1, frac

    r0, r1, fr = axis_coords(out_rows, in_rows)
    c0, c1, fc = axis_coords(out_cols, in_cols)
    top = grid_map[r0][:, c0] * (1 - fc) + grid_map[r0][:, c1] * fc
    bot = grid_map[r1][:, c0] * (1 - fc) + grid_map[r1][:, c1] * fc
    return top * (1 - fr[:, None]) + bot * fr[:, None]


def pixel_map(scores: np.ndarray, rows: int, cols: int, cfg: ScoreConfig) -> np.ndarray:
    """Coarse map -> Gaussian smoothing -> bilinear upsample to output dims."""
    cfg.validate()
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size != rows * cols:
        raise DimensionError(f"{scores.size} scores cannot fill a {rows}x{cols} grid")
    coarse = scores.reshape(rows, cols)
    smoothed = gaussian_blur_grid(coarse, cfg.blur_sigma)
    out_rows = cfg.output_rows or rows
    out_cols = cfg.output_cols or cols
    return bilinear_upsample(smoothed, out_rows, out_cols)


def score_grid(query: PatchGrid, model, cfg: ScoreConfig,
               topo: GridTopology = None) -> AnomalyResult:
    """Full scoring path for one query grid."""
    s = patch_scores(query, model, topo)
    return AnomalyResult(
        patch_scores=s,
        image_score=image_score(s, cfg),
        pixel_map=pixel_map(s, query.rows, query.cols, cfg),
    )

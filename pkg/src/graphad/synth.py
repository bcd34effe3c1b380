"""Synthetic token-grid generator with ground truth.

Normal grids are a smooth low-rank spatial field (separable cosine modes with
random per-channel amplitudes) plus i.i.d. Gaussian noise, so "normality" has
local neighbor correlation the encoder can learn. Anomalous grids shift one
rectangular block of tokens along a fixed random direction.

The texture field is drawn from ``category_seed`` and the per-image noise from
``seed``, so grids sharing a category_seed are noisy views of one appearance
pattern, the way images of one object category are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tokenio import PatchGrid


@dataclass
class SynthSpec:
    rows: int = 32
    cols: int = 32
    dim: int = 64
    texture_rank: int = 4
    texture_amp: float = 3.0  # std of the base offset and per-channel mode amplitudes
    noise_sigma: float = 1.0
    anomaly_block: tuple = (12, 12, 4, 4)  # (row, col, height, width)
    anomaly_magnitude: float = 3.0  # in units of noise_sigma
    seed: int = 0  # per-image stream: noise and anomaly direction
    category_seed: int = 0  # shared texture field stream

    def validate(self):
        r, c, h, w = self.anomaly_block
        if not (0 <= r and 0 <= c and h > 0 and w > 0
                and r + h <= self.rows and c + w <= self.cols):
            raise DimensionError(f"anomaly block {self.anomaly_block} exceeds "
                                 f"{self.rows}x{self.cols} grid")
        if self.anomaly_magnitude < 0:
            raise DimensionError("anomaly magnitude must be >= 0")
        return self


def _field(spec: SynthSpec) -> np.ndarray:
    """Sum of separable cosine modes, (rows*cols, dim) float64."""
    rng = np.random.default_rng(spec.category_seed)
    r = np.arange(spec.rows)
    c = np.arange(spec.cols)
    # constant base appearance so no token sits near the origin, where the
    # cosine residual would be dominated by noise
    field = np.broadcast_to(rng.normal(0.0, spec.texture_amp, size=spec.dim),
                            (spec.rows, spec.cols, spec.dim)).copy()
    for _ in range(spec.texture_rank):
        freq_r = rng.integers(1, 4)
        freq_c = rng.integers(1, 4)
        phase_r = rng.uniform(0, 2 * np.pi)
        phase_c = rng.uniform(0, 2 * np.pi)
        amp = rng.normal(0.0, spec.texture_amp, size=spec.dim)
        mode_r = np.cos(2 * np.pi * freq_r * r / spec.rows + phase_r)
        mode_c = np.cos(2 * np.pi * freq_c * c / spec.cols + phase_c)
        field += mode_r[:, None, None] * mode_c[None, :, None] * amp[None, None, :]
    return field.reshape(spec.rows * spec.cols, spec.dim)


def generate_normal(spec: SynthSpec) -> PatchGrid:
    """Deterministic per seed: smooth field + Gaussian noise."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    tokens = _field(spec)
    if spec.noise_sigma > 0:
        tokens = tokens + rng.normal(0.0, spec.noise_sigma, size=tokens.shape)
    return PatchGrid(spec.rows, spec.cols, spec.dim, tokens.astype(np.float32))


def generate_anomalous(spec: SynthSpec):
    """Normal grid with the anomaly block shifted; returns (grid, patch mask).

    Every channel of a block token moves by magnitude*noise_sigma along a
    fixed random sign pattern drawn after the normal draws, so the grid
    matches generate_normal(spec) outside the block.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    tokens = _field(spec)
    if spec.noise_sigma > 0:
        tokens = tokens + rng.normal(0.0, spec.noise_sigma, size=tokens.shape)
    direction = np.where(rng.random(spec.dim) < 0.5, -1.0, 1.0)
    mask = np.zeros((spec.rows, spec.cols), dtype=bool)
    r, c, h, w = spec.anomaly_block
    mask[r:r + h, c:c + w] = True
    shift = spec.anomaly_magnitude * spec.noise_sigma * direction
    tokens = tokens.reshape(spec.rows, spec.cols, spec.dim)
    tokens[mask] += shift
    grid = PatchGrid(spec.rows, spec.cols, spec.dim,
                     tokens.reshape(-1, spec.dim).astype(np.float32))
    return grid, mask

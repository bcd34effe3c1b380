"""Scoring pipeline: pooling sort oracle, blur convolution oracle, bilinear
per-pixel formula oracle, and end-to-end localization on a trained model."""

import numpy as np
import pytest

from graphad.align import AlignConfig
from graphad.errors import ConfigError, DimensionError
from graphad.gat import EncoderConfig
from graphad.score import (POOL_MAX, ScoreConfig, bilinear_upsample, gaussian_blur_grid,
                           image_score, patch_scores, pixel_map, score_grid)
from graphad.synth import SynthSpec, generate_anomalous, generate_normal
from graphad.train import TrainConfig, train_model


def test_image_score_topk_matches_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(1, 200))
        scores = rng.normal(size=n)
        ratio = float(rng.uniform(0.005, 1.0))
        cfg = ScoreConfig(top_ratio=ratio)
        k = max(1, int(np.floor(ratio * n + 0.5)))
        want = float(np.sort(scores)[::-1][:k].mean())
        assert image_score(scores, cfg) == pytest.approx(want, rel=1e-12)


def test_image_score_max_pooling():
    scores = np.array([0.1, 0.9, 0.3])
    assert image_score(scores, ScoreConfig(image_pooling=POOL_MAX)) == 0.9


def test_image_score_validation():
    with pytest.raises(DimensionError):
        image_score(np.array([]), ScoreConfig())
    with pytest.raises(ConfigError):
        image_score(np.ones(4), ScoreConfig(top_ratio=0.0))
    with pytest.raises(ConfigError):
        image_score(np.ones(4), ScoreConfig(image_pooling="median"))


def naive_blur(grid, sigma):
    """Direct 2-D convolution with reflect padding; loops only."""
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k1 = np.exp(-0.5 * (x / sigma) ** 2)
    k1 /= k1.sum()
    kernel = np.outer(k1, k1)
    rows, cols = grid.shape
    out = np.zeros_like(grid, dtype=float)

    def reflect(i, n):  # scipy 'reflect': (d c b a | a b c d | d c b a)
        while i < 0 or i >= n:
            if i < 0:
                i = -i - 1
            if i >= n:
                i = 2 * n - i - 1
        return i

    for r in range(rows):
        for c in range(cols):
            acc = 0.0
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr = reflect(r + dr, rows)
                    cc = reflect(c + dc, cols)
                    acc += kernel[dr + radius, dc + radius] * grid[rr, cc]
            out[r, c] = acc
    return out


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_gaussian_blur_matches_naive_convolution(sigma):
    rng = np.random.default_rng(1)
    grid = rng.normal(size=(7, 9))
    np.testing.assert_allclose(gaussian_blur_grid(grid, sigma),
                               naive_blur(grid, sigma), atol=1e-12)


def test_blur_preserves_mean_and_identity_at_zero_sigma():
    rng = np.random.default_rng(2)
    grid = rng.normal(size=(6, 6))
    np.testing.assert_array_equal(gaussian_blur_grid(grid, 0.0), grid)
    # reflect padding conserves total mass for a normalized kernel on any
    # constant input; check the constant case exactly
    const = np.full((5, 8), 3.25)
    np.testing.assert_allclose(gaussian_blur_grid(const, 1.5), const, atol=1e-12)


def naive_bilinear(grid, out_rows, out_cols):
    """Per-pixel half-pixel-center formula, loops only."""
    in_rows, in_cols = grid.shape
    out = np.zeros((out_rows, out_cols))
    for r in range(out_rows):
        for c in range(out_cols):
            sr = min(max((r + 0.5) * in_rows / out_rows - 0.5, 0.0), in_rows - 1.0)
            sc = min(max((c + 0.5) * in_cols / out_cols - 0.5, 0.0), in_cols - 1.0)
            r0, c0 = int(np.floor(sr)), int(np.floor(sc))
            r1, c1 = min(r0 + 1, in_rows - 1), min(c0 + 1, in_cols - 1)
            fr, fc = sr - r0, sc - c0
            out[r, c] = (grid[r0, c0] * (1 - fr) * (1 - fc)
                         + grid[r0, c1] * (1 - fr) * fc
                         + grid[r1, c0] * fr * (1 - fc)
                         + grid[r1, c1] * fr * fc)
    return out


@pytest.mark.parametrize("shape,out_shape", [((4, 4), (8, 8)), ((3, 5), (9, 10)),
                                             ((4, 4), (4, 4)), ((2, 2), (7, 3))])
def test_bilinear_matches_per_pixel_formula(shape, out_shape):
    rng = np.random.default_rng(3)
    grid = rng.normal(size=shape)
    np.testing.assert_allclose(bilinear_upsample(grid, *out_shape),
                               naive_bilinear(grid, *out_shape), atol=1e-12)


def test_bilinear_integer_factor_preserves_extremes():
    grid = np.array([[0.0, 1.0], [2.0, 4.0]])
    up = bilinear_upsample(grid, 8, 8)
    assert up.min() >= 0.0 and up.max() <= 4.0
    assert up[0, 0] == 0.0 and up[-1, -1] == 4.0  # corners clamp to sources


def test_bilinear_rejects_downsampling():
    with pytest.raises(DimensionError):
        bilinear_upsample(np.zeros((4, 4)), 2, 8)


def test_pixel_map_dims_and_default():
    scores = np.arange(12.0)
    cfg = ScoreConfig(blur_sigma=0.0)
    out = pixel_map(scores, 3, 4, cfg)
    assert out.shape == (3, 4)
    np.testing.assert_array_equal(out, scores.reshape(3, 4))
    big = pixel_map(scores, 3, 4, ScoreConfig(blur_sigma=0.0, output_rows=6,
                                              output_cols=8))
    assert big.shape == (6, 8)
    with pytest.raises(DimensionError):
        pixel_map(scores, 3, 5, cfg)


def train_tiny_model():
    spec = SynthSpec(rows=8, cols=8, dim=8, anomaly_block=(2, 2, 2, 2),
                     seed=0, category_seed=11)
    cfg = TrainConfig(
        encoder=EncoderConfig(input_dim=8, num_layers=2, hidden_dim=16),
        align=AlignConfig(latent_dim=16, g_hidden_dim=16),
        lr=3e-3, max_epochs=150, patience=50, seed=0)
    model, _ = train_model([generate_normal(spec)], cfg)
    return spec, model


def test_end_to_end_localization():
    spec, model = train_tiny_model()
    anom_spec = SynthSpec(**{**spec.__dict__, "seed": 5})
    grid, mask = generate_anomalous(anom_spec)
    result = score_grid(grid, model, ScoreConfig(top_ratio=0.06))
    flat = mask.reshape(-1)
    # anomalous patches must outscore normal ones on average
    assert result.patch_scores[flat].mean() > 2 * result.patch_scores[~flat].mean()
    # the image score of the anomalous grid exceeds a fresh normal grid's
    normal = generate_normal(SynthSpec(**{**spec.__dict__, "seed": 6}))
    normal_result = score_grid(normal, model, ScoreConfig(top_ratio=0.06))
    assert result.image_score > normal_result.image_score
    assert result.pixel_map.shape == (8, 8)


def test_patch_scores_dim_validation():
    spec, model = train_tiny_model()
    bad = generate_normal(SynthSpec(**{**spec.__dict__, "dim": 4}))
    with pytest.raises(DimensionError):
        patch_scores(bad, model)


def test_score_config_validation():
    with pytest.raises(ConfigError):
        ScoreConfig(top_ratio=1.5).validate()
    with pytest.raises(ConfigError):
        ScoreConfig(blur_sigma=-1.0).validate()

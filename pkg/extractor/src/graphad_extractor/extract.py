"""Image -> token file extraction.

Pipeline per image: resize so the short side equals beta (aspect preserved),
center-crop both dims down to the nearest patch multiple, run the frozen
backbone, average the patch tokens of the last zeta layers, and write a
graphad token file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from graphad import PatchGrid
from graphad.tokenio import write_tokens_file

from .errors import ExtractorConfigError, ImageError


@dataclass
class ExtractorConfig:
    backbone: str = "stub"
    beta: int = 512  # short-side resize target in pixels
    zeta: int = 8  # how many of the last layers to average
    rotations: list = field(default_factory=list)  # degrees, support augmentation
    pre_norm: bool = False  # take tokens before the final layernorm

    def validate(self, depth: int = None):
        if self.beta < 1:
            raise ExtractorConfigError(f"beta must be >= 1, got {self.beta}")
        if self.zeta < 1:
            raise ExtractorConfigError(f"zeta must be >= 1, got {self.zeta}")
        if depth is not None and self.zeta > depth:
            raise ExtractorConfigError(
                f"zeta {self.zeta} exceeds backbone depth {depth}")
        for angle in self.rotations:
            if angle % 90 != 0 or not 0 < angle < 360:
                raise ExtractorConfigError(
                    f"rotations must be 90/180/270 degrees, got {angle}")
        return self


def load_image(path) -> np.ndarray:
    """Image file -> float64 RGB array in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return np.asarray(rgb, dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc


def resize_short_side(image: np.ndarray, beta: int) -> np.ndarray:
    """Bilinear resize so min(H, W) == beta, aspect ratio preserved."""
    h, w, _ = image.shape
    scale = beta / min(h, w)
    new_h, new_w = round(h * scale), round(w * scale)
    if (new_h, new_w) == (h, w):
        return image
    pil = Image.fromarray(np.clip(image * 255.0, 0, 255).astype(np.uint8))
    resized = pil.resize((new_w, new_h), Image.BILINEAR)
    return np.asarray(resized, dtype=np.float64) / 255.0


def center_crop_to_multiple(image: np.ndarray, patch: int) -> np.ndarray:
    """Crop both dims down to the nearest patch multiple, centered."""
    h, w, _ = image.shape
    ch, cw = (h // patch) * patch, (w // patch) * patch
    if ch < patch or cw < patch:
        raise ImageError(f"image {h}x{w} smaller than one {patch}px patch")
    top = (h - ch) // 2
    left = (w - cw) // 2
    return image[top:top + ch, left:left + cw]


def tokens_for_image(image: np.ndarray, backbone, cfg: ExtractorConfig) -> PatchGrid:
    cfg.validate(depth=backbone.depth)
    prepared = center_crop_to_multiple(resize_short_side(image, cfg.beta),
                                       backbone.patch_size)
    layers = backbone.patch_tokens(prepared)
    stacked = np.stack(layers[-cfg.zeta:], axis=0)
    mean = stacked.mean(axis=0)
    rows, cols, dim = mean.shape
    grid = PatchGrid(rows, cols, dim, mean.reshape(rows * cols, dim).astype(np.float32))
    return grid.validate()


def extract_tokens(image_path, out_path, backbone, cfg: ExtractorConfig) -> PatchGrid:
    """One image -> one token file; returns the written grid."""
    grid = tokens_for_image(load_image(image_path), backbone, cfg)
    write_tokens_file(grid, out_path)
    return grid


def extract_augmented(image_path, out_dir, backbone, cfg: ExtractorConfig,
                      stem: str = None) -> list:
    """One support image -> the original plus one token file per rotation.

    Returns the list of written paths; filenames are ``<stem>_<angle>.gadt``
    with ``_0`` for the unrotated image.
    """
    from pathlib import Path
    cfg.validate(depth=backbone.depth)
    out_dir = Path(out_dir)
    image = load_image(image_path)
    stem = stem or Path(image_path).stem
    written = []
    for angle in [0, *cfg.rotations]:
        rotated = np.rot90(image, k=angle // 90) if angle else image
        grid = tokens_for_image(np.ascontiguousarray(rotated), backbone, cfg)
        path = out_dir / f"{stem}_{angle}.gadt"
        write_tokens_file(grid, path)
        written.append(path)
    return written

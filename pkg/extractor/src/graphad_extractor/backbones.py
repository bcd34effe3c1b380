"""Backbone registry and loading.

A backbone is any object with ``patch_size``, ``width``, ``depth``, and a
``patch_tokens(image) -> list`` method returning, per transformer layer, an
array of shape (rows, cols, width) of patch tokens for an image whose sides
are exact patch multiples. The engine never sees the backbone; only the
token files cross the boundary.

``stub`` is a weightless deterministic backbone (fixed random projections of
raw patch pixels) for pipeline tests and offline dry runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BackboneUnavailableError, ExtractorConfigError

# id -> (hub repo, hub model name, patch, width, depth, default beta)
PRETRAINED = {
    "dinov2-vits14": ("facebookresearch/dinov2", "dinov2_vits14", 14, 384, 12, 488),
    "dinov2-vitb14": ("facebookresearch/dinov2", "dinov2_vitb14", 14, 768, 12, 488),
    "dinov2-vitl14": ("facebookresearch/dinov2", "dinov2_vitl14", 14, 1024, 24, 488),
    "dinov3-vits16": ("facebookresearch/dinov3", "dinov3_vits16", 16, 384, 12, 512),
    "dinov3-vitb16": ("facebookresearch/dinov3", "dinov3_vitb16", 16, 768, 12, 512),
    "dinov3-vitl16": ("facebookresearch/dinov3", "dinov3_vitl16", 16, 1024, 24, 512),
}


@dataclass
class StubBackbone:
    """Deterministic random-projection 'ViT': each layer projects the raw
    pixels of every patch through a fixed seeded matrix. No weights needed;
    output depends only on the image, so extraction is reproducible."""

    patch_size: int = 16
    width: int = 64
    depth: int = 12

    def patch_tokens(self, image: np.ndarray) -> list:
        h, w, c = image.shape
        if h % self.patch_size or w % self.patch_size:
            raise ExtractorConfigError(
                f"image dims {h}x{w} are not multiples of patch {self.patch_size}")
        rows, cols = h // self.patch_size, w // self.patch_size
        p = self.patch_size
        patches = image.reshape(rows, p, cols, p, c).transpose(0, 2, 1, 3, 4)
        flat = patches.reshape(rows, cols, p * p * c)
        out = []
        for layer in range(self.depth):
            rng = np.random.default_rng(10_000 + layer)
            proj = rng.standard_normal((p * p * c, self.width)) / np.sqrt(p * p * c)
            out.append(np.tanh(flat @ proj + 0.1 * layer))
        return out


class TorchHubBackbone:
    """Frozen pretrained ViT loaded through torch.hub; tokens are taken from
    get_intermediate_layers over all blocks (post-norm by default)."""

    def __init__(self, repo, name, patch_size, width, depth, pre_norm=False):
        try:
            import torch
            self._torch = torch
            self.model = torch.hub.load(repo, name)
        except Exception as exc:  # noqa: BLE001 - any load failure is terminal
            raise BackboneUnavailableError(
                f"cannot load {name} from torch.hub ({exc}). Download the "
                f"weights on a machine with internet access via "
                f"`torch.hub.load('{repo}', '{name}')`, which caches them "
                f"under ~/.cache/torch/hub, then copy that cache here."
            ) from exc
        self.model.eval()
        self.patch_size = patch_size
        self.width = width
        self.depth = depth
        self.pre_norm = pre_norm

    def patch_tokens(self, image: np.ndarray) -> list:
        torch = self._torch
        h, w, _ = image.shape
        rows, cols = h // self.patch_size, w // self.patch_size
        mean = np.array([0.485, 0.456, 0.406])
        std = np.array([0.229, 0.224, 0.225])
        x = torch.from_numpy(((image - mean) / std).transpose(2, 0, 1)[None]).float()
        with torch.no_grad():
            layers = self.model.get_intermediate_layers(
                x, n=self.depth, reshape=False, norm=not self.pre_norm)
        return [layer[0].reshape(rows, cols, self.width).numpy() for layer in layers]


def load_backbone(backbone_id: str, pre_norm: bool = False):
    if backbone_id == "stub":
        return StubBackbone()
    if backbone_id not in PRETRAINED:
        known = ", ".join(["stub", *PRETRAINED])
        raise ExtractorConfigError(f"unknown backbone {backbone_id!r}; choose from {known}")
    repo, name, patch, width, depth, _ = PRETRAINED[backbone_id]
    return TorchHubBackbone(repo, name, patch, width, depth, pre_norm=pre_norm)


def default_beta(backbone_id: str) -> int:
    if backbone_id == "stub":
        return 512
    if backbone_id not in PRETRAINED:
        raise ExtractorConfigError(f"unknown backbone {backbone_id!r}")
    return PRETRAINED[backbone_id][5]

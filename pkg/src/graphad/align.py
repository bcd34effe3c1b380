"""Projection heads into the shared latent space and the Scaled Cosine Error.

The input tokens go through a single linear head q(.), the encoder outputs
through an MLP head g(.) (Linear -> ReLU -> Linear). Dissimilarity in the
latent space is (1 - cos)^gamma, used both as training loss and, per node,
as the anomaly score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateNormWarning, DimensionError

OBJ_SCE = "sce"
OBJ_MSE = "mse"
OBJ_COSINE = "cosine"
OBJECTIVES = (OBJ_SCE, OBJ_MSE, OBJ_COSINE)

NORM_FLOOR = 1e-12


@dataclass
class AlignConfig:
    latent_dim: int = 256
    gamma: float = 2.0
    g_hidden_dim: int = 256
    objective: str = OBJ_SCE

    def validate(self):
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.gamma < 1.0:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}")
        return self

    def effective_gamma(self) -> float:
        return 1.0 if self.objective == OBJ_COSINE else self.gamma


@dataclass
class ProjectionHeads:
    q_weight: np.ndarray  # (f, D)
    q_bias: np.ndarray  # (f,)
    g_w1: np.ndarray  # (hidden, F)
    g_b1: np.ndarray
    g_w2: np.ndarray  # (f, hidden)
    g_b2: np.ndarray


def project_input(x: np.ndarray, heads: ProjectionHeads) -> np.ndarray:
    """q(x): single linear layer; accepts one vector or an (N, D) batch."""
    x = np.asarray(x)
    if x.shape[-1] != heads.q_weight.shape[1]:
        raise DimensionError(f"input dim {x.shape[-1]} != q weight dim {heads.q_weight.shape[1]}")
    return x @ heads.q_weight.T + heads.q_bias


def project_encoded(h: np.ndarray, heads: ProjectionHeads) -> np.ndarray:
    """g(h): Linear -> ReLU -> Linear; accepts one vector or an (N, F) batch."""
    h = np.asarray(h)
    if h.shape[-1] != heads.g_w1.shape[1]:
        raise DimensionError(f"input dim {h.shape[-1]} != g weight dim {heads.g_w1.shape[1]}")
    hidden = np.maximum(h @ heads.g_w1.T + heads.g_b1, 0)
    return hidden @ heads.g_w2.T + heads.g_b2


def _cosine_rows(z: np.ndarray, zt: np.ndarray):
    """Row-wise cosine; degenerate norms give cosine 0 and are flagged."""
    n1 = np.linalg.norm(z, axis=-1)
    n2 = np.linalg.norm(zt, axis=-1)
    degenerate = (n1 < NORM_FLOOR) | (n2 < NORM_FLOOR)
    if np.any(degenerate):
        warnings.warn("degenerate norm in cosine; treating cosine as 0",
                      DegenerateNormWarning)
    denom = np.where(degenerate, 1.0, n1 * n2)
    cos = np.einsum("...f,...f->...", z, zt) / denom
    cos = np.where(degenerate, 0.0, cos)
    return cos, n1, n2, degenerate


def sce_per_node(z: np.ndarray, zt: np.ndarray, gamma: float) -> float:
    """(1 - cos(z, zt))^gamma for a single node pair."""
    if gamma < 1.0:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    z = np.asarray(z, dtype=np.float64)
    zt = np.asarray(zt, dtype=np.float64)
    if z.shape != zt.shape:
        raise DimensionError(f"shape mismatch {z.shape} vs {zt.shape}")
    cos, _, _, _ = _cosine_rows(z, zt)
    return float(np.maximum(1.0 - cos, 0.0) ** gamma)


def sce_scores(z: np.ndarray, zt: np.ndarray, gamma: float) -> np.ndarray:
    """Row-wise SCE scores for (N, f) matrices."""
    cos, _, _, _ = _cosine_rows(z, zt)
    return np.maximum(1.0 - cos, 0.0) ** gamma


def sce_loss(z: np.ndarray, zt: np.ndarray, gamma: float) -> float:
    """Mean SCE over all rows."""
    z = np.asarray(z)
    zt = np.asarray(zt)
    if z.shape != zt.shape:
        raise DimensionError(f"shape mismatch {z.shape} vs {zt.shape}")
    if z.ndim != 2 or z.shape[0] < 1:
        raise DimensionError("expected non-empty (N, f) matrices")
    return float(sce_scores(z, zt, gamma).mean())


def mse_scores(z: np.ndarray, zt: np.ndarray) -> np.ndarray:
    return np.mean(np.square(z - zt), axis=-1)


def residual_scores(z: np.ndarray, zt: np.ndarray, cfg: AlignConfig) -> np.ndarray:
    """Per-node residual under the configured objective."""
    if cfg.objective == OBJ_MSE:
        return mse_scores(z, zt)
    return sce_scores(z, zt, cfg.effective_gamma())


def loss_and_latent_grads(z: np.ndarray, zt: np.ndarray, cfg: AlignConfig):
    """Objective value plus analytic gradients w.r.t. both latent matrices.

    Returns (loss, d_z, d_zt).
    """
    n = z.shape[0]
    if cfg.objective == OBJ_MSE:
        diff = z - zt
        loss = float(np.mean(np.square(diff)))
        d = 2.0 * diff / diff.size
        return loss, d, -d
    gamma = cfg.effective_gamma()
    cos, n1, n2, degenerate = _cosine_rows(z, zt)
    u = np.maximum(1.0 - cos, 0.0)
    loss = float(np.mean(u ** gamma))
    # d loss / d cos per row; 0**0 == 1 handles gamma == 1 at u == 0
    dl_dcos = -(gamma / n) * u ** (gamma - 1.0)
    dl_dcos = np.where(degenerate, 0.0, dl_dcos)
    safe1 = np.where(degenerate, 1.0, n1)
    safe2 = np.where(degenerate, 1.0, n2)
    inv12 = 1.0 / (safe1 * safe2)
    d_z = dl_dcos[:, None] * (zt * inv12[:, None] - z * (cos / np.square(safe1))[:, None])
    d_zt = dl_dcos[:, None] * (z * inv12[:, None] - zt * (cos / np.square(safe2))[:, None])
    return loss, d_z.astype(z.dtype), d_zt.astype(zt.dtype)


def heads_forward(x: np.ndarray, h: np.ndarray, heads: ProjectionHeads):
    """Project both spaces, keeping the g(.) hidden activations for backward."""
    z = project_input(x, heads)
    hidden = np.maximum(h @ heads.g_w1.T + heads.g_b1, 0)
    zt = hidden @ heads.g_w2.T + heads.g_b2
    return z, zt, hidden


def heads_backward(x: np.ndarray, h: np.ndarray, hidden: np.ndarray,
                   heads: ProjectionHeads, d_z: np.ndarray, d_zt: np.ndarray):
    """Gradients for all head parameters and the encoder output.

    Returns (grads dict, d_h).
    """
    grads = {
        "q.weight": d_z.T @ x,
        "q.bias": d_z.sum(axis=0),
        "g.w2": d_zt.T @ hidden,
        "g.b2": d_zt.sum(axis=0),
    }
    d_hidden = (d_zt @ heads.g_w2) * (hidden > 0)
    grads["g.w1"] = d_hidden.T @ h
    grads["g.b1"] = d_hidden.sum(axis=0)
    d_h = d_hidden @ heads.g_w1
    return grads, d_h

"""Masked graph-attention encoder.

Each attentional layer computes, for every edge (i, j) with j in N(i):

    e_ij    = LeakyReLU(a^T [W h_i || W h_j])
    alpha_i = softmax over N(i) of e_i.
    h'_i    = ELU(sum_j alpha_ij W h_j)

A GCN variant replaces the attention weights with the symmetric degree
normalization 1/sqrt(|N(i)||N(j)|). Node feature masking replaces a random
fraction of the input rows with a learnable mask token before layer 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .graph import GridTopology
from .nn import dropout_mask, elu, elu_grad_from_output, leaky_relu, leaky_relu_grad, segment_softmax
from .tokenio import PatchGrid

AGG_GAT = "gat"
AGG_GCN = "gcn"


@dataclass
class GatLayerParams:
    weight: np.ndarray  # (out_dim, in_dim)
    attn: np.ndarray  # (2*out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class EncoderConfig:
    input_dim: int
    num_layers: int = 3
    hidden_dim: int = 256
    mask_ratio: float = 0.2
    dropout_rate: float = 0.3
    aggregation: str = AGG_GAT
    leaky_slope: float = 0.2

    def validate(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.aggregation not in (AGG_GAT, AGG_GCN):
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        return self


@dataclass
class EncoderParams:
    layers: list  # of GatLayerParams; layer 1 maps D->F, the rest F->F
    mask_token: np.ndarray  # (input_dim,)


def num_masked(n_nodes: int, ratio: float) -> int:
    if ratio == 0.0:
        return 0
    return max(1, int(np.floor(ratio * n_nodes + 0.5)))


def apply_feature_mask(features: np.ndarray, mask_token: np.ndarray, ratio: float,
                       rng: np.random.Generator):
    """Replace a uniformly sampled fraction of rows with the mask token.

    Returns (masked copy, index array of masked nodes).
    """
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"mask ratio must be in [0, 1), got {ratio}")
    n = features.shape[0]
    k = num_masked(n, ratio)
    if k == 0:
        return features.copy(), np.empty(0, dtype=np.int64)
    idx = rng.choice(n, size=k, replace=False)
    out = features.copy()
    out[idx] = mask_token.astype(features.dtype, copy=False)
    return out, idx


@dataclass
class LayerCache:
    """Everything the backward pass needs from one layer forward."""

    inputs: np.ndarray  # H, (N, F_in)
    transformed: np.ndarray  # G = H @ W.T, (N, F_out)
    coeff: np.ndarray  # per-edge aggregation weight actually applied
    pre_act: np.ndarray  # (N, F_out) pre-ELU
    out: np.ndarray
    # GAT-only intermediates
    edge_logit_raw: np.ndarray = None  # pre-LeakyReLU
    alpha: np.ndarray = None  # post-softmax, pre-dropout
    drop_mult: np.ndarray = None  # dropout multipliers or None


def _check_layer_shapes(features: np.ndarray, topo: GridTopology, params: GatLayerParams):
    if features.shape[0] != topo.num_nodes:
        raise DimensionError(
            f"feature rows {features.shape[0]} != grid nodes {topo.num_nodes}"
        )
    if features.shape[1] != params.in_dim:
        raise DimensionError(
            f"feature dim {features.shape[1]} != layer input dim {params.in_dim}"
        )


def gat_layer_forward(features: np.ndarray, topo: GridTopology, params: GatLayerParams,
                      dropout_rate: float = 0.0, rng: np.random.Generator = None,
                      training: bool = False, leaky_slope: float = 0.2,
                      want_cache: bool = False):
    _check_layer_shapes(features, topo, params)
    dtype = features.dtype
    src, dst, indptr = topo.edge_src, topo.edge_dst, topo.indptr
    g = features @ params.weight.T  # (N, F_out)
    f_out = params.out_dim
    a_src = params.attn[:f_out].astype(dtype, copy=False)
    a_dst = params.attn[f_out:].astype(dtype, copy=False)
    s = g @ a_src  # (N,)
    t = g @ a_dst
    raw = s[src] + t[dst]
    logits = leaky_relu(raw, leaky_slope)
    alpha = segment_softmax(logits, indptr)
    drop_mult = None
    coeff = alpha
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ConfigError("training-mode dropout requires an rng")
        drop_mult = dropout_mask(alpha.shape, dropout_rate, rng, dtype=dtype)
        coeff = alpha * drop_mult
    pre = topo.aggregate(coeff, g)
    out = elu(pre)
    if not want_cache:
        return out
    return out, LayerCache(features, g, coeff, pre, out, raw, alpha, drop_mult)


def gat_layer_backward(d_out: np.ndarray, topo: GridTopology, params: GatLayerParams,
                       cache: LayerCache, leaky_slope: float = 0.2):
    """Returns (d_inputs, d_weight, d_attn)."""
    src, dst, indptr = topo.edge_src, topo.edge_dst, topo.indptr
    starts = indptr[:-1]
    counts = np.diff(indptr)
    n = topo.num_nodes
    f_out = params.out_dim
    g = cache.transformed
    d_pre = d_out * elu_grad_from_output(cache.pre_act, cache.out)
    # through the weighted aggregation
    d_coeff = np.einsum("ef,ef->e", d_pre[src], g[dst])
    d_g = topo.aggregate_transpose(cache.coeff, d_pre)
    # dropout
    d_alpha = d_coeff if cache.drop_mult is None else d_coeff * cache.drop_mult
    # softmax jacobian within each neighborhood
    alpha = cache.alpha
    rowdot = np.add.reduceat(alpha * d_alpha, starts)
    d_logit = alpha * (d_alpha - np.repeat(rowdot, counts))
    d_raw = d_logit * leaky_relu_grad(cache.edge_logit_raw, leaky_slope)
    # raw_e = s[src_e] + t[dst_e]
    d_s = np.add.reduceat(d_raw, starts)  # edges are CSR-sorted by src
    d_t = np.bincount(dst, weights=d_raw, minlength=n).astype(g.dtype)
    dtype = g.dtype
    a_src = params.attn[:f_out].astype(dtype, copy=False)
    a_dst = params.attn[f_out:].astype(dtype, copy=False)
    d_g += d_s[:, None] * a_src + d_t[:, None] * a_dst
    d_attn = np.concatenate([g.T @ d_s, g.T @ d_t]).astype(params.attn.dtype)
    d_weight = (d_g.T @ cache.inputs).astype(params.weight.dtype)
    d_inputs = d_g @ params.weight.astype(dtype, copy=False)
    return d_inputs, d_weight, d_attn


def gcn_layer_forward(features: np.ndarray, topo: GridTopology, params: GatLayerParams,
                      want_cache: bool = False):
    """Symmetrically normalized aggregation; the attention vector is unused."""
    _check_layer_shapes(features, topo, params)
    src, dst, indptr = topo.edge_src, topo.edge_dst, topo.indptr
    g = features @ params.weight.T
    deg = topo.degrees().astype(features.dtype)
    coeff = 1.0 / np.sqrt(deg[src] * deg[dst])
    pre = topo.aggregate(coeff, g)
    out = elu(pre)
    if not want_cache:
        return out
    return out, LayerCache(features, g, coeff, pre, out)


def gcn_layer_backward(d_out: np.ndarray, topo: GridTopology, params: GatLayerParams,
                       cache: LayerCache):
    g = cache.transformed
    d_pre = d_out * elu_grad_from_output(cache.pre_act, cache.out)
    d_g = topo.aggregate_transpose(cache.coeff, d_pre)
    d_weight = (d_g.T @ cache.inputs).astype(params.weight.dtype)
    d_inputs = d_g @ params.weight.astype(g.dtype, copy=False)
    d_attn = np.zeros_like(params.attn)
    return d_inputs, d_weight, d_attn


def encoder_forward(grid: PatchGrid, topo: GridTopology, params: EncoderParams,
                    cfg: EncoderConfig, rng: np.random.Generator = None,
                    training: bool = False, want_caches: bool = False,
                    mask_idx: np.ndarray = None):
    """Run the full encoder; returns (H_R, masked index set[, caches]).

    At inference there is no masking and no dropout; the masked set is empty.
    ``mask_idx`` pins the masked nodes instead of sampling them (training only).
    """
    cfg.validate()
    if grid.dim != cfg.input_dim:
        raise DimensionError(f"grid dim {grid.dim} != configured input dim {cfg.input_dim}")
    if grid.rows != topo.rows or grid.cols != topo.cols:
        raise DimensionError("grid shape disagrees with topology")
    features = grid.data
    if training:
        if mask_idx is not None:
            masked = np.asarray(mask_idx, dtype=np.int64)
            features = features.copy()
            features[masked] = params.mask_token.astype(features.dtype, copy=False)
        elif cfg.mask_ratio == 0.0:
            masked = np.empty(0, dtype=np.int64)
        else:
            if rng is None:
                raise ConfigError("training-mode masking requires an rng")
            features, masked = apply_feature_mask(features, params.mask_token,
                                                  cfg.mask_ratio, rng)
    else:
        masked = np.empty(0, dtype=np.int64)
    h = features
    caches = []
    for layer in params.layers:
        if cfg.aggregation == AGG_GCN:
            h, cache = gcn_layer_forward(h, topo, layer, want_cache=True)
        else:
            h, cache = gat_layer_forward(
                h, topo, layer, dropout_rate=cfg.dropout_rate, rng=rng,
                training=training, leaky_slope=cfg.leaky_slope, want_cache=True)
        caches.append(cache)
    if want_caches:
        return h, masked, caches
    return h, masked


def encoder_backward(d_h: np.ndarray, topo: GridTopology, params: EncoderParams,
                     cfg: EncoderConfig, caches: list, masked: np.ndarray):
    """Backprop through the stacked layers and the mask routing.

    Returns (per-layer [(d_weight, d_attn)], d_mask_token, d_input_features).
    """
    layer_grads = [None] * len(params.layers)
    d = d_h
    for r in range(len(params.layers) - 1, -1, -1):
        if cfg.aggregation == AGG_GCN:
            d, dw, da = gcn_layer_backward(d, topo, params.layers[r], caches[r])
        else:
            d, dw, da = gat_layer_backward(d, topo, params.layers[r], caches[r],
                                           leaky_slope=cfg.leaky_slope)
        layer_grads[r] = (dw, da)
    d_mask_token = d[masked].sum(axis=0) if masked.size else np.zeros_like(params.mask_token)
    return layer_grads, d_mask_token.astype(params.mask_token.dtype), d

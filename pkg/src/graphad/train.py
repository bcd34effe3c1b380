"""Per-category training: full-batch epochs over the support grids, mask
resampled every epoch, Adam updates, early stopping on the training loss.

RNG consumption order is fixed for reproducibility: parameter init first,
then per epoch and per support grid the mask sample followed by the layer
dropout draws.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .align import (AlignConfig, OBJECTIVES, ProjectionHeads, heads_backward,
                    heads_forward, loss_and_latent_grads)
from .errors import ConfigError, DimensionError, FormatError, NumericalError, TruncationError, UnsupportedVersionError
from .gat import (AGG_GAT, AGG_GCN, EncoderConfig, EncoderParams, GatLayerParams,
                  encoder_backward, encoder_forward)
from .graph import GridTopology, build_grid_topology
from .nn import AdamState, adam_step, xavier_uniform_init
from .tokenio import PatchGrid


@dataclass
class TrainConfig:
    encoder: EncoderConfig
    align: AlignConfig = field(default_factory=AlignConfig)
    lr: float = 3e-4
    max_epochs: int = 2000
    patience: int = 100
    min_delta: float = 1e-5
    seed: int = 0

    def validate(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        self.encoder.validate()
        self.align.validate()
        return self


@dataclass
class ModelParams:
    encoder: EncoderParams
    heads: ProjectionHeads
    config: TrainConfig


def init_model(cfg: TrainConfig, rng: np.random.Generator, dtype=np.float32) -> ModelParams:
    """Fresh parameters; draw order is part of the reproducibility contract."""
    cfg.validate()
    enc = cfg.encoder
    layers = []
    in_dim = enc.input_dim
    for _ in range(enc.num_layers):
        w = xavier_uniform_init(enc.hidden_dim, in_dim, rng, dtype=dtype)
        a = xavier_uniform_init(2 * enc.hidden_dim, 1, rng, dtype=dtype)[:, 0]
        layers.append(GatLayerParams(w, a))
        in_dim = enc.hidden_dim
    mask_token = np.zeros(enc.input_dim, dtype=dtype)
    al = cfg.align
    heads = ProjectionHeads(
        q_weight=xavier_uniform_init(al.latent_dim, enc.input_dim, rng, dtype=dtype),
        q_bias=np.zeros(al.latent_dim, dtype=dtype),
        g_w1=xavier_uniform_init(al.g_hidden_dim, enc.hidden_dim, rng, dtype=dtype),
        g_b1=np.zeros(al.g_hidden_dim, dtype=dtype),
        g_w2=xavier_uniform_init(al.latent_dim, al.g_hidden_dim, rng, dtype=dtype),
        g_b2=np.zeros(al.latent_dim, dtype=dtype),
    )
    return ModelParams(EncoderParams(layers, mask_token), heads, cfg)


def params_dict(model: ModelParams) -> dict:
    """Named views of every learnable tensor, in the fixed serialization order."""
    out = {}
    for r, layer in enumerate(model.encoder.layers):
        out[f"layer{r}.weight"] = layer.weight
        out[f"layer{r}.attn"] = layer.attn
    out["mask_token"] = model.encoder.mask_token
    h = model.heads
    out.update({"q.weight": h.q_weight, "q.bias": h.q_bias,
                "g.w1": h.g_w1, "g.b1": h.g_b1, "g.w2": h.g_w2, "g.b2": h.g_b2})
    return out


def loss_and_grads(grid: PatchGrid, topo: GridTopology, model: ModelParams,
                   rng: np.random.Generator = None, mask_idx: np.ndarray = None):
    """One training-mode forward/backward on a single grid.

    Returns (loss, grads dict keyed like :func:`params_dict`).
    """
    cfg = model.config
    h_r, masked, caches = encoder_forward(
        grid, topo, model.encoder, cfg.encoder, rng=rng, training=True,
        want_caches=True, mask_idx=mask_idx)
    x = grid.data.astype(h_r.dtype, copy=False)
    z, zt, hidden = heads_forward(x, h_r, model.heads)
    loss, d_z, d_zt = loss_and_latent_grads(z, zt, cfg.align)
    grads, d_h = heads_backward(x, h_r, hidden, model.heads, d_z, d_zt)
    layer_grads, d_mask_token, _ = encoder_backward(
        d_h, topo, model.encoder, cfg.encoder, caches, masked)
    for r, (dw, da) in enumerate(layer_grads):
        grads[f"layer{r}.weight"] = dw
        grads[f"layer{r}.attn"] = da
    grads["mask_token"] = d_mask_token
    return loss, grads


def train_model(support: list, cfg: TrainConfig, dtype=np.float32):
    """Train on k >= 1 support grids; returns (best ModelParams, loss history)."""
    cfg.validate()
    if not support:
        raise DimensionError("support set is empty")
    dims = {(g.rows, g.cols, g.dim) for g in support}
    if len(dims) > 1:
        raise DimensionError(f"support grids have heterogeneous dims: {sorted(dims)}")
    rows, cols, dim = next(iter(dims))
    if dim != cfg.encoder.input_dim:
        raise DimensionError(
            f"support dim {dim} != configured input dim {cfg.encoder.input_dim}")
    topo = build_grid_topology(rows, cols)
    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, rng, dtype=dtype)
    params = params_dict(model)
    states = {name: AdamState.for_param(p, cfg.lr) for name, p in params.items()}
    history = []
    best_loss = np.inf
    best_snapshot = None
    bad_epochs = 0
    for epoch in range(cfg.max_epochs):
        total = {name: np.zeros_like(p) for name, p in params.items()}
        epoch_loss = 0.0
        for grid in support:
            loss, grads = loss_and_grads(grid, topo, model, rng=rng)
            epoch_loss += loss
            for name in total:
                total[name] += grads[name]
        epoch_loss /= len(support)
        if not np.isfinite(epoch_loss):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        history.append(epoch_loss)
        if epoch_loss < best_loss - cfg.min_delta:
            best_loss = epoch_loss
            best_snapshot = {name: p.copy() for name, p in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
        k = len(support)
        for name, p in params.items():
            adam_step(p, total[name] / k, states[name])
    if best_snapshot is not None:
        for name, p in params.items():
            np.copyto(p, best_snapshot[name])
    return model, history


# --- checkpoint format ------------------------------------------------------
# magic GADC, u32 version, fixed-order config scalars, epoch count, final
# loss, then each tensor from params_dict() as raw little-endian float32.

CKPT_MAGIC = b"GADC"
CKPT_VERSION = 1
_AGG_CODES = {AGG_GAT: 0, AGG_GCN: 1}
_OBJ_CODES = {name: i for i, name in enumerate(OBJECTIVES)}
_CFG_HEADER = struct.Struct("<4sI ddQ II IIIddId IIdI Id".replace(" ", ""))


@dataclass
class Checkpoint:
    model: ModelParams
    epochs_trained: int
    final_loss: float


def save_checkpoint(model: ModelParams, sink, epochs_trained: int = 0,
                    final_loss: float = float("nan")) -> int:
    cfg = model.config
    enc, al = cfg.encoder, cfg.align
    header = _CFG_HEADER.pack(
        CKPT_MAGIC, CKPT_VERSION,
        cfg.lr, cfg.min_delta, cfg.seed,
        cfg.max_epochs, cfg.patience,
        enc.input_dim, enc.num_layers, enc.hidden_dim,
        enc.mask_ratio, enc.dropout_rate, _AGG_CODES[enc.aggregation], enc.leaky_slope,
        al.latent_dim, al.g_hidden_dim, al.gamma, _OBJ_CODES[al.objective],
        epochs_trained, final_loss,
    )
    sink.write(header)
    written = len(header)
    for tensor in params_dict(model).values():
        payload = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
        sink.write(payload)
        written += len(payload)
    return written


def load_checkpoint(source) -> Checkpoint:
    raw = source.read(_CFG_HEADER.size)
    if len(raw) < _CFG_HEADER.size:
        raise FormatError(f"checkpoint header truncated: {len(raw)} bytes")
    (magic, version, lr, min_delta, seed, max_epochs, patience,
     input_dim, num_layers, hidden_dim, mask_ratio, dropout_rate, agg_code,
     leaky_slope, latent_dim, g_hidden_dim, gamma, obj_code,
     epochs_trained, final_loss) = _CFG_HEADER.unpack(raw)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}")
    aggs = {v: k for k, v in _AGG_CODES.items()}
    objs = {v: k for k, v in _OBJ_CODES.items()}
    if agg_code not in aggs or obj_code not in objs:
        raise FormatError("unknown aggregation or objective code")
    cfg = TrainConfig(
        encoder=EncoderConfig(input_dim=input_dim, num_layers=num_layers,
                              hidden_dim=hidden_dim, mask_ratio=mask_ratio,
                              dropout_rate=dropout_rate, aggregation=aggs[agg_code],
                              leaky_slope=leaky_slope),
        align=AlignConfig(latent_dim=latent_dim, gamma=gamma,
                          g_hidden_dim=g_hidden_dim, objective=objs[obj_code]),
        lr=lr, max_epochs=max_epochs, patience=patience,
        min_delta=min_delta, seed=seed,
    ).validate()
    model = init_model(cfg, np.random.default_rng(0))  # shapes only; overwritten below
    for name, tensor in params_dict(model).items():
        expected = tensor.size * 4
        payload = source.read(expected)
        if len(payload) < expected:
            raise FormatError(f"checkpoint truncated in tensor {name}")
        np.copyto(tensor, np.frombuffer(payload, dtype="<f4").reshape(tensor.shape))
    extra = source.read(1)
    if extra:
        raise FormatError("trailing bytes after checkpoint payload")
    return Checkpoint(model, epochs_trained, final_loss)

"""Numerical kernels: linear maps, activations, neighborhood softmax,
inverted dropout, Xavier init, and Adam.

Every kernel that participates in training has an analytic backward; each is
checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError


def linear(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Bias-free linear map. 1-D input -> weight @ x; 2-D batch -> x @ weight.T."""
    x = np.asarray(x)
    weight = np.asarray(weight)
    if weight.ndim != 2:
        raise DimensionError(f"weight must be 2-D, got {weight.ndim}-D")
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"shape mismatch: input {x.shape} vs weight {weight.shape}")
    return x @ weight.T


def leaky_relu(x, slope: float = 0.2):
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky slope must be in (0, 1), got {slope}")
    x = np.asarray(x)
    return np.where(x >= 0, x, x * np.asarray(slope, dtype=x.dtype))


def leaky_relu_grad(x, slope: float = 0.2):
    x = np.asarray(x)
    one = np.asarray(1, dtype=x.dtype)
    return np.where(x >= 0, one, np.asarray(slope, dtype=x.dtype))


def elu(x):
    x = np.asarray(x)
    # branch-free: expm1(min(x, 0)) + max(x, 0)
    return np.expm1(np.minimum(x, 0)) + np.maximum(x, 0)


def elu_grad_from_output(x, out):
    """d elu/dx given the forward output (elu'(x) = elu(x)+1 for x<0)."""
    x = np.asarray(x)
    one = np.asarray(1, dtype=out.dtype)
    return np.where(x >= 0, one, out + one)


def neighborhood_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over one neighborhood's logits."""
    logits = np.asarray(logits)
    if logits.size == 0:
        raise DimensionError("softmax over an empty neighborhood")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def segment_softmax(logits: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Softmax within each CSR segment of a flat edge-logit array."""
    starts = indptr[:-1]
    counts = np.diff(indptr)
    seg_max = np.maximum.reduceat(logits, starts)
    e = np.exp(logits - np.repeat(seg_max, counts))
    seg_sum = np.add.reduceat(e, starts)
    return e / np.repeat(seg_sum, counts)


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Multiplier array for inverted dropout: 0 with prob rate, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    dtype = np.dtype(dtype)
    if rate == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


def inverted_dropout(weights: np.ndarray, rate: float, rng: np.random.Generator,
                     training: bool = True) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    weights = np.asarray(weights)
    if not training or rate == 0.0:
        return weights.copy()
    return weights * dropout_mask(weights.shape, rate, rng, dtype=weights.dtype)


def xavier_uniform_init(rows: int, cols: int, rng: np.random.Generator,
                        dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)


@dataclass
class AdamState:
    """Adam moment buffers for one parameter tensor."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=np.zeros_like(param), v=np.zeros_like(param), **kw)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One in-place Adam update with bias correction; returns ``param``."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise DimensionError(
            f"adam shapes disagree: param {param.shape}, grad {grad.shape}, m {state.m.shape}"
        )
    state.step += 1
    t = state.step
    dt = param.dtype.type
    g = grad.astype(param.dtype, copy=False)
    state.m *= dt(state.beta1)
    state.m += dt(1.0 - state.beta1) * g
    state.v *= dt(state.beta2)
    state.v += dt(1.0 - state.beta2) * np.square(g)
    m_hat = state.m / dt(1.0 - state.beta1 ** t)
    v_hat = state.v / dt(1.0 - state.beta2 ** t)
    param -= dt(state.lr) * m_hat / (np.sqrt(v_hat) + dt(state.eps))
    return param

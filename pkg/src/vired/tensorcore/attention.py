from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor


class ConfigError(ValueError):
    """Model configuration is internally inconsistent."""


@dataclass
class AttentionWeights:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    *lead, n, d = x.shape
    x = ops.reshape(x, (*lead, n, n_heads, d // n_heads))
    perm = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return ops.transpose(x, perm)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    perm = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return ops.reshape(ops.transpose(x, perm), (*lead, n, h * dh))


def mha(query: Tensor, key: Tensor, value: Tensor, weights: AttentionWeights, n_heads: int,
        key_mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product multi-head attention with an output projection.

    Inputs are [Nq, D] / [Nk, D] or batched [B, Nq, D] / [B, Nk, D]. There is no
    causal mask and no positional term. ``key_mask`` ([Nk] or [B, Nk], True =
    attend) excludes padding keys.
    """
    d = query.shape[-1]
    if d % n_heads:
        raise ConfigError(f"dim {d} not divisible by {n_heads} heads")
    if key.shape[-1] != d or value.shape[-1] != d:
        raise ConfigError(f"attention dims disagree: {query.shape}, {key.shape}, {value.shape}")
    dh = d // n_heads
    q = _split_heads(ops.linear(query, weights.wq, weights.bq), n_heads)
    k = _split_heads(ops.linear(key, weights.wk, weights.bk), n_heads)
    v = _split_heads(ops.linear(value, weights.wv, weights.bv), n_heads)
    scores = ops.matmul(q, ops.transpose(k, _swap_last(k.ndim))) * (1.0 / np.sqrt(dh))
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)
        bias = np.where(km, 0.0, -1e9).astype(np.float32)
        # broadcast over heads and queries
        bias = bias[..., None, None, :] if bias.ndim == 2 else bias[None, None, :]
        scores = ops.add(scores, bias)
    attn = ops.softmax(scores, axis=-1)
    out = _merge_heads(ops.matmul(attn, v))
    return ops.linear(out, weights.wo, weights.bo)


def _swap_last(ndim: int) -> tuple[int, ...]:
    return tuple(range(ndim - 2)) + (ndim - 1, ndim - 2)

"""Bidirectional transformer decoder over object tokens, pair filtering, relation head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import DecoderConfig
from .object_encoder import InstanceType
from .tensorcore import MLP, ConfigError, LayerNorm, Linear, Module, MultiHeadAttention, Tensor, ops


class DecoderLayer(Module):
    """Self-attention, cross-attention to image features, FFN; all pre-norm residual.

    No causal mask and no positional term over objects, so the layer is
    equivariant to any reordering of the object rows.
    """

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        d = cfg.dim
        hidden = int(d * cfg.mlp_ratio)
        self.ln_self = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, cfg.n_heads, rng)
        self.ln_cross = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, cfg.n_heads, rng)
        self.ln_ffn = LayerNorm(d)
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)
        self.dropout = cfg.dropout

    def __call__(self, objects: Tensor, image_feats: Tensor, object_mask=None, rng=None) -> Tensor:
        if objects.shape[-1] != image_feats.shape[-1]:
            raise ConfigError(f"object dim {objects.shape[-1]} != image feature dim {image_feats.shape[-1]}")
        h = self.ln_self(objects)
        x = objects + self.self_attn(h, h, h, key_mask=object_mask)
        h = self.ln_cross(x)
        x = x + self.cross_attn(h, image_feats, image_feats)
        ffn = self.fc2(ops.relu(self.fc1(self.ln_ffn(x))))
        return x + ops.dropout(ffn, self.dropout, self.training, rng)


class RelationDecoder(Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = [DecoderLayer(cfg, rng) for _ in range(cfg.n_layers)]

    def __call__(self, objects: Tensor, image_feats: Tensor, object_mask=None, rng=None) -> Tensor:
        return fuse(objects, image_feats, self.cfg, self, object_mask=object_mask, rng=rng)


def decoder_layer(objects: Tensor, image_feats: Tensor, weights: DecoderLayer, object_mask=None, rng=None) -> Tensor:
    return weights(objects, image_feats, object_mask=object_mask, rng=rng)


def fuse(objects: Tensor, image_feats: Tensor, cfg: DecoderConfig, weights: RelationDecoder,
         object_mask=None, rng=None) -> Tensor:
    """Apply the decoder layers in sequence.

    ``objects`` is [N, D] against [M, D] features, or padded [B, N, D] against
    [B, M, D] with ``object_mask`` [B, N] marking real objects.
    """
    if len(weights.layers) != cfg.n_layers:
        raise ConfigError(f"decoder weights have {len(weights.layers)} layers, config says {cfg.n_layers}")
    x = objects
    for layer in weights.layers:
        x = layer(x, image_feats, object_mask=object_mask, rng=rng)
    return x


@dataclass(frozen=True)
class PairIndex:
    circuit_idx: int
    table_idx: int


@dataclass
class RelationPrediction:
    pair: PairIndex
    logits: np.ndarray
    probability: float


def enumerate_pairs(types: Sequence[int]) -> list[PairIndex]:
    """All (circuit, table) index pairs, circuit first, in row-major grid order.

    Of the (N_c + N_t)^2 ordered combinations only circuit->table survive, so
    the result has exactly N_c * N_t entries.
    """
    types = [int(t) for t in types]
    circuits = [i for i, t in enumerate(types) if t == InstanceType.CIRCUIT]
    tables = [j for j, t in enumerate(types) if t == InstanceType.TABLE]
    return [PairIndex(i, j) for i in circuits for j in tables]


class RelationHead(Module):
    """Circuit token ++ table token -> MLP(2D, D, D, D/2) with ReLU -> linear(D/2, 2)."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.mlp = MLP([2 * dim, dim, dim, dim // 2, 2], rng, init="uniform")

    def __call__(self, pair_features: Tensor) -> Tensor:
        return self.mlp(pair_features)


def pair_logits(fused: Tensor, circuit_rows: np.ndarray, table_rows: np.ndarray, head: RelationHead) -> Tensor:
    """[P, 2] logits for rows gathered from a flat [N, D] token matrix."""
    feats = ops.concat([ops.index(fused, np.asarray(circuit_rows, dtype=np.int64)),
                        ops.index(fused, np.asarray(table_rows, dtype=np.int64))], axis=-1)
    return head(feats)


def predict_relations(fused: Tensor, pairs: Sequence[PairIndex], head: RelationHead) -> list[RelationPrediction]:
    n = fused.shape[0]
    if not pairs:
        return []
    ci = np.array([p.circuit_idx for p in pairs])
    ti = np.array([p.table_idx for p in pairs])
    if min(ci.min(), ti.min()) < 0 or max(ci.max(), ti.max()) >= n:
        raise IndexError(f"pair index out of range for {n} tokens")
    logits = pair_logits(fused, ci, ti, head).data
    probs = ops.softmax(Tensor(logits), axis=-1).data[:, 1]
    return [RelationPrediction(p, logits[k].copy(), float(probs[k])) for k, p in enumerate(pairs)]

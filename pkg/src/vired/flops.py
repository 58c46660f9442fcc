"""Analytic inference FLOPs for one drawing.

A multiply-add counts as 2 FLOPs. Bias adds, residual adds and ReLU are not
counted. Softmax and layer norm are charged ``norm_cost`` FLOPs per element.
All counts are exact Python integers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .config import ModelConfig

NORM_COST = 5


@dataclass(frozen=True)
class FlopsBreakdown:
    vision: int
    object: int
    decoder: int
    head: int

    @property
    def total(self) -> int:
        return self.vision + self.object + self.decoder + self.head

    def as_row(self, n: int) -> list[int]:
        return [n, self.total, self.vision, self.object, self.decoder, self.head]


def linear_flops(n: int, d_in: int, d_out: int) -> int:
    return 2 * n * d_in * d_out


def conv_flops(c_in: int, c_out: int, kernel: int, h_out: int, w_out: int) -> int:
    return 2 * c_in * kernel * kernel * c_out * h_out * w_out


def attention_flops(n_q: int, n_k: int, dim: int, n_heads: int, norm_cost: int = NORM_COST) -> int:
    """Projections, QK^T, softmax, weighted sum of values, output projection."""
    proj = linear_flops(n_q, dim, dim) + 2 * linear_flops(n_k, dim, dim) + linear_flops(n_q, dim, dim)
    scores = 2 * n_q * n_k * dim
    softmax = norm_cost * n_heads * n_q * n_k
    mix = 2 * n_q * n_k * dim
    return proj + scores + softmax + mix


def _mlp_flops(n: int, sizes: list[int]) -> int:
    return sum(linear_flops(n, a, b) for a, b in zip(sizes, sizes[1:]))


def vision_flops(cfg: ModelConfig, image_size: int, norm_cost: int = NORM_COST) -> int:
    v = cfg.vision
    p = (image_size // v.patch_size) ** 2
    d = v.dim
    hidden = int(d * v.mlp_ratio)
    total = linear_flops(p, 3 * v.patch_size ** 2, d)
    per_layer = (2 * norm_cost * p * d + attention_flops(p, p, d, v.n_heads, norm_cost)
                 + _mlp_flops(p, [d, hidden, d]))
    total += v.n_layers * per_layer
    total += norm_cost * p * d + linear_flops(p, d, cfg.dim)
    return total


def object_flops_each(cfg: ModelConfig) -> int:
    o = cfg.objects
    size = o.mask_size
    c_in = 1
    total = 0
    for c_out in o.channels:
        size //= 2
        total += conv_flops(c_in, c_out, o.kernel, size, size)
        c_in = c_out
    return total + linear_flops(1, o.flat_dim, o.dim)


def decoder_flops(cfg: ModelConfig, n_objects: int, image_size: int, norm_cost: int = NORM_COST) -> int:
    dec = cfg.decoder
    p = (image_size // cfg.vision.patch_size) ** 2
    d = dec.dim
    hidden = int(d * dec.mlp_ratio)
    per_layer = (3 * norm_cost * n_objects * d
                 + attention_flops(n_objects, n_objects, d, dec.n_heads, norm_cost)
                 + attention_flops(n_objects, p, d, dec.n_heads, norm_cost)
                 + _mlp_flops(n_objects, [d, hidden, d]))
    return dec.n_layers * per_layer


def head_flops_each(cfg: ModelConfig, norm_cost: int = NORM_COST) -> int:
    """Relation MLP on one concatenated pair plus the 2-way softmax."""
    d = cfg.dim
    return _mlp_flops(1, [2 * d, d, d, d // 2, 2]) + norm_cost * 2


def estimate_flops(cfg: ModelConfig, n_circuits: int, n_tables: int, image_size: int | None = None,
                   norm_cost: int = NORM_COST) -> FlopsBreakdown:
    if n_circuits < 0 or n_tables < 0:
        raise ValueError("object counts must be non-negative")
    image_size = image_size or cfg.vision.image_size
    n = n_circuits + n_tables
    return FlopsBreakdown(
        vision=vision_flops(cfg, image_size, norm_cost),
        object=n * object_flops_each(cfg),
        decoder=decoder_flops(cfg, n, image_size, norm_cost),
        head=n_circuits * n_tables * head_flops_each(cfg, norm_cost),
    )


def split_objects(n: int) -> tuple[int, int]:
    """N objects as ceil(N/2) circuits and floor(N/2) tables."""
    return (n + 1) // 2, n // 2


def sweep(cfg: ModelConfig, n_max: int = 20, image_size: int | None = None,
          norm_cost: int = NORM_COST) -> list[tuple[int, FlopsBreakdown]]:
    return [(n, estimate_flops(cfg, *split_objects(n), image_size, norm_cost)) for n in range(1, n_max + 1)]


def sweep_csv(cfg: ModelConfig, n_max: int = 20, image_size: int | None = None,
              norm_cost: int = NORM_COST) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "total", "vision", "object", "decoder", "head"])
    for n, b in sweep(cfg, n_max, image_size, norm_cost):
        w.writerow(b.as_row(n))
    return buf.getvalue()

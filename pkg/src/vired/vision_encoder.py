"""Patch-token vision transformer producing the cross-attention memory."""

from __future__ import annotations

import numpy as np

from .config import VisionConfig
from .tensorcore import ConfigError, LayerNorm, Linear, Module, MultiHeadAttention, Tensor, ops, param, trunc_normal


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Split [3, H, W] (or [B, 3, H, W]) into raster-ordered flattened patches.

    Each patch row is the C-order flattening of its [3, p, p] block, so a
    single-patch image maps to ``image.reshape(-1)``.
    """
    img = np.asarray(image, dtype=np.float32)
    batched = img.ndim == 4
    if not batched:
        img = img[None]
    b, c, h, w = img.shape
    p = patch_size
    if h % p or w % p:
        raise ConfigError(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    out = img.reshape(b, c, gh, p, gw, p).transpose(0, 2, 4, 1, 3, 5).reshape(b, gh * gw, c * p * p)
    return out if batched else out[0]


def resize_nearest(image: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbour resize of an [H, W, ...] array to [size, size, ...]."""
    h, w = image.shape[:2]
    rows = np.minimum(((np.arange(size) + 0.5) * h / size).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(size) + 0.5) * w / size).astype(np.int64), w - 1)
    return image[rows][:, cols]


def to_image_tensor(pixels: np.ndarray) -> np.ndarray:
    """uint8 [H, W, 3] -> float32 [3, H, W] in [0, 1]."""
    return np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)


class EncoderBlock(Module):
    """Pre-norm transformer encoder block."""

    def __init__(self, dim: int, n_heads: int, mlp_ratio: float, rng: np.random.Generator):
        hidden = int(dim * mlp_ratio)
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, n_heads, rng)
        self.ln2 = LayerNorm(dim)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, h)
        return x + self.fc2(ops.relu(self.fc1(self.ln2(x))))


class VisionEncoder(Module):
    """Linear patch embedding + learned positions + encoder blocks + projection to ``out_dim``.

    ``calls`` counts encoded images; the relation pipeline must encode every
    image exactly once no matter how many objects it holds.
    """

    def __init__(self, cfg: VisionConfig, rng: np.random.Generator, out_dim: int | None = None):
        self.cfg = cfg
        d = cfg.dim
        self.patch_embed = Linear(3 * cfg.patch_size ** 2, d, rng)
        self.pos_embed = param(trunc_normal(rng, (cfg.n_patches, d)))
        self.blocks = [EncoderBlock(d, cfg.n_heads, cfg.mlp_ratio, rng) for _ in range(cfg.n_layers)]
        self.norm = LayerNorm(d)
        self.proj = Linear(d, out_dim or d, rng)
        self.calls = 0

    def __call__(self, images: np.ndarray) -> Tensor:
        """[3, S, S] -> [N_patches, D]; [B, 3, S, S] -> [B, N_patches, D]."""
        images = np.asarray(images, dtype=np.float32)
        if images.shape[-1] != self.cfg.image_size or images.shape[-2] != self.cfg.image_size:
            raise ConfigError(f"expected {self.cfg.image_size}px images, got {images.shape}")
        self.calls += 1 if images.ndim == 3 else images.shape[0]
        x = self.patch_embed(Tensor(patchify(images, self.cfg.patch_size)))
        x = x + self.pos_embed
        for blk in self.blocks:
            x = blk(x)
        return self.proj(self.norm(x))


def encode_image(image: np.ndarray, cfg: VisionConfig, weights: VisionEncoder) -> Tensor:
    if weights.cfg != cfg:
        raise ConfigError("vision weights were built for a different config")
    return weights(image)

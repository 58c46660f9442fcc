"""Box masks -> CNN embeddings -> object tokens."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .config import ObjectEncoderConfig
from .tensorcore import ConfigError, Linear, Module, Tensor, fan_in_uniform, ops, param


class InstanceType(IntEnum):
    CIRCUIT = 0
    TABLE = 1


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 1 or self.h < 1 or self.x < 0 or self.y < 0:
            raise ValueError(f"invalid bbox {self}")

    def inside(self, width: float, height: float) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2, self.y + self.h / 2

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]


class _RasterStats:
    degenerate = 0


raster_stats = _RasterStats()


def rasterize_mask(bbox: BoundingBox, image_size: int, mask_size: int) -> np.ndarray:
    """Binary [1, mask_size, mask_size] mask of ``bbox`` in a square image.

    A mask pixel is 1 iff its centre, mapped back to image coordinates, lies in
    the closed box. The comparison is done on integers scaled by 2*mask_size so
    integer boxes rasterise exactly and the rule commutes with flips/rotations.
    A box too small to cover any pixel centre lights the pixel under its own
    centre and bumps ``raster_stats.degenerate``.
    """
    if not bbox.inside(image_size, image_size):
        raise ValueError(f"{bbox} outside a {image_size}px image")
    m = mask_size
    centers = (2 * np.arange(m) + 1) * image_size  # pixel centre * 2m
    lo_x, hi_x = 2 * m * bbox.x, 2 * m * (bbox.x + bbox.w)
    lo_y, hi_y = 2 * m * bbox.y, 2 * m * (bbox.y + bbox.h)
    cols = (centers >= lo_x) & (centers <= hi_x)
    rows = (centers >= lo_y) & (centers <= hi_y)
    if not cols.any() or not rows.any():
        raster_stats.degenerate += 1
        cx, cy = bbox.center
        scale = m / image_size
        if not cols.any():
            cols[min(int(cx * scale), m - 1)] = True
        if not rows.any():
            rows[min(int(cy * scale), m - 1)] = True
    return (rows[:, None] & cols[None, :]).astype(np.float32)[None]


class ObjectEncoder(Module):
    """Three stride-2 conv+ReLU stages, flatten, linear projection to D."""

    def __init__(self, cfg: ObjectEncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        k = cfg.kernel
        c_in = 1
        self.conv_w = []
        self.conv_b = []
        for c_out in cfg.channels:
            fan_in = c_in * k * k
            self.conv_w.append(param(fan_in_uniform(rng, (c_out, c_in, k, k), fan_in)))
            self.conv_b.append(param(np.zeros(c_out)))
            c_in = c_out
        self.proj = Linear(cfg.flat_dim, cfg.dim, rng, init="uniform")

    def named_parameters(self, prefix: str = ""):
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            yield f"{prefix}conv{i}.weight", w
            yield f"{prefix}conv{i}.bias", b
        yield from self.proj.named_parameters(f"{prefix}proj.")

    def __call__(self, masks: np.ndarray | Tensor) -> Tensor:
        """[1, S, S] -> [D]; [N, 1, S, S] -> [N, D]."""
        x = masks if isinstance(masks, Tensor) else Tensor(masks)
        unbatched = x.ndim == 3
        if x.shape[-1] != self.cfg.mask_size or x.shape[-2] != self.cfg.mask_size or x.shape[-3] != 1:
            raise ConfigError(f"expected [.., 1, {self.cfg.mask_size}, {self.cfg.mask_size}] masks, got {x.shape}")
        if unbatched:
            x = ops.reshape(x, (1, *x.shape))
        for w, b in zip(self.conv_w, self.conv_b):
            x = ops.relu(ops.conv2d(x, w, b, stride=2, padding=self.cfg.kernel // 2))
        x = ops.reshape(x, (x.shape[0], -1))
        out = self.proj(x)
        return ops.reshape(out, (out.shape[-1],)) if unbatched else out


def encode_mask(mask: np.ndarray, weights: ObjectEncoder, cfg: ObjectEncoderConfig) -> Tensor:
    if mask.shape[-1] != cfg.mask_size:
        raise ConfigError(f"mask size {mask.shape[-1]} != configured {cfg.mask_size}")
    return weights(mask)


def make_object_tokens(mask_embeddings: Tensor, types, type_embeddings: Tensor | None, use_type: bool) -> Tensor:
    """Row i = F_mask_i + type_embeddings[types[i]] (or F_mask_i alone when ``use_type`` is off).

    With ``use_type`` off the type table is never touched.
    """
    types = np.asarray(types, dtype=np.int64)
    if types.shape[0] != mask_embeddings.shape[-2]:
        raise ConfigError(f"{mask_embeddings.shape[-2]} mask embeddings but {types.shape[0]} types")
    if not use_type:
        return mask_embeddings
    return mask_embeddings + ops.embedding(type_embeddings, types)

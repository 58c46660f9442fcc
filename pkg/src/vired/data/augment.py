"""Flips, D4 symmetries and instance-preserving random crops."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..object_encoder import BoundingBox
from ..vision_encoder import resize_nearest
from .types import Annotation, Drawing

FLIP_P = 0.2


def hflip_box(b: BoundingBox, width: float) -> BoundingBox:
    return BoundingBox(width - b.x - b.w, b.y, b.w, b.h)


def vflip_box(b: BoundingBox, height: float) -> BoundingBox:
    return BoundingBox(b.x, height - b.y - b.h, b.w, b.h)


def rot90_box(b: BoundingBox, width: float) -> BoundingBox:
    """Box under ``np.rot90(img)`` (counter-clockwise); ``width`` is the pre-rotation width."""
    return BoundingBox(b.y, width - b.x - b.w, b.h, b.w)


def d4_array(arr: np.ndarray, g: int) -> np.ndarray:
    """Element ``g`` in 0..7 of D4: optional horizontal flip (g >= 4) then ``g % 4`` CCW quarter turns.

    Acts on the two leading axes of [H, W, ...] arrays.
    """
    if g >= 4:
        arr = arr[:, ::-1]
    return np.ascontiguousarray(np.rot90(arr, g % 4))


def d4_box(b: BoundingBox, g: int, width: float, height: float) -> BoundingBox:
    if g >= 4:
        b = hflip_box(b, width)
    for _ in range(g % 4):
        b = rot90_box(b, width)
        width, height = height, width
    return b


def _map(d: Drawing, image: np.ndarray, fn) -> Drawing:
    anns = [Annotation(a.id, fn(a.bbox), a.category) for a in d.annotations]
    return replace(d, image=image, annotations=anns, relations=list(d.relations), flags=dict(d.flags))


def hflip(d: Drawing) -> Drawing:
    return _map(d, np.ascontiguousarray(d.image[:, ::-1]), lambda b: hflip_box(b, d.width))


def vflip(d: Drawing) -> Drawing:
    return _map(d, np.ascontiguousarray(d.image[::-1]), lambda b: vflip_box(b, d.height))


def d4(d: Drawing, g: int) -> Drawing:
    return _map(d, d4_array(d.image, g), lambda b: d4_box(b, g, d.width, d.height))


def crop_window_range(d: Drawing, size: int) -> tuple[tuple[int, int], tuple[int, int]] | None:
    """Inclusive ranges of valid top-left corners for a ``size`` window holding every box."""
    if size > d.width or size > d.height:
        return None
    if not d.annotations:
        return (0, d.width - size), (0, d.height - size)
    x0 = min(a.bbox.x for a in d.annotations)
    y0 = min(a.bbox.y for a in d.annotations)
    x1 = max(a.bbox.x + a.bbox.w for a in d.annotations)
    y1 = max(a.bbox.y + a.bbox.h for a in d.annotations)
    lo_x, hi_x = max(0, int(np.ceil(x1 - size))), min(d.width - size, int(np.floor(x0)))
    lo_y, hi_y = max(0, int(np.ceil(y1 - size))), min(d.height - size, int(np.floor(y0)))
    if lo_x > hi_x or lo_y > hi_y:
        return None
    return (lo_x, hi_x), (lo_y, hi_y)


def scale_to(d: Drawing, size: int) -> Drawing:
    """Nearest-neighbour resize to ``size`` x ``size``; boxes scale with the pixels."""
    if d.width == size and d.height == size:
        return d
    sx, sy = size / d.width, size / d.height
    return _map(d, resize_nearest(d.image, size),
                lambda b: BoundingBox(b.x * sx, b.y * sy, max(b.w * sx, 1.0), max(b.h * sy, 1.0)))


def random_crop(d: Drawing, size: int, rng: np.random.Generator) -> Drawing:
    rng_xy = crop_window_range(d, size)
    if rng_xy is None:
        out = scale_to(d, size)
        out.flags["crop_fallback"] = out.flags.get("crop_fallback", 0) + 1
        return out
    (lx, hx), (ly, hy) = rng_xy
    cx = int(rng.integers(lx, hx + 1))
    cy = int(rng.integers(ly, hy + 1))
    img = np.ascontiguousarray(d.image[cy:cy + size, cx:cx + size])
    return _map(d, img, lambda b: BoundingBox(b.x - cx, b.y - cy, b.w, b.h))


def center_crop(d: Drawing, size: int) -> Drawing:
    """Deterministic crop at the middle of the valid window range; scale-to-fit when none exists.

    Keeps evaluation at the same pixel scale as the random training crops.
    """
    rng_xy = crop_window_range(d, size)
    if rng_xy is None:
        return scale_to(d, size)
    (lx, hx), (ly, hy) = rng_xy
    cx, cy = (lx + hx) // 2, (ly + hy) // 2
    img = np.ascontiguousarray(d.image[cy:cy + size, cx:cx + size])
    return _map(d, img, lambda b: BoundingBox(b.x - cx, b.y - cy, b.w, b.h))


def augment(d: Drawing, rng: np.random.Generator, training: bool, crop_size: int | None = None,
            reorient: bool = True) -> Drawing:
    """Training-time pipeline: hflip (p=0.2), vflip (p=0.2), uniform D4 element, instance-preserving crop.

    ``reorient=False`` keeps only the crop, for pages with a fixed reading
    direction. Eval mode returns ``d`` unchanged. Relations and annotation ids
    are never touched.
    """
    if not training:
        return d
    if not reorient:
        return d if crop_size is None else random_crop(d, crop_size, rng)
    if rng.random() < FLIP_P:
        d = hflip(d)
    if rng.random() < FLIP_P:
        d = vflip(d)
    d = d4(d, int(rng.integers(0, 8)))
    if crop_size is not None:
        d = random_crop(d, crop_size, rng)
    return d

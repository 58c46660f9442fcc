"""Synthetic engineering drawings (circuits + parameter tables) and 5-class document pages.

Drawings are laid out on a grid of cells inside a ``content`` square placed at a
random offset on the canvas. Each occupied cell holds one circuit glyph at the
top and zero or more ruled tables stacked beneath it; a table describes exactly
the circuit of its own cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..object_encoder import BoundingBox, InstanceType
from ..tensorcore import stream
from . import raster
from .types import PRETRAIN_CATEGORIES, Annotation, Dataset, Drawing, RelationLabel

INK = 0
PAPER = 255


@dataclass(frozen=True)
class GeneratorConfig:
    canvas: int = 128
    content: int = 112
    circuits: tuple[int, int] = (6, 11)
    tables: tuple[int, int] = (0, 16)
    pattern_mix: dict[str, float] = field(
        default_factory=lambda: {"none": 0.35, "one_to_one": 0.45, "one_to_many": 0.20})
    many: tuple[int, int] = (2, 3)
    distractor_density: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("circuits", "tables", "many"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"empty range for {name}: {lo}..{hi}")
        if abs(sum(self.pattern_mix.values()) - 1.0) > 1e-9:
            raise ValueError("pattern_mix weights must sum to 1")
        if set(self.pattern_mix) - {"none", "one_to_one", "one_to_many"}:
            raise ValueError(f"unknown relation patterns {sorted(self.pattern_mix)}")
        if self.content > self.canvas:
            raise ValueError("content square larger than canvas")


def _split(total: int, parts: int, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Integer extents summing to ``total`` (+-20% jitter) and their offsets."""
    weights = rng.uniform(0.8, 1.2, size=parts)
    edges = np.rint(np.concatenate([[0], np.cumsum(weights) / weights.sum() * total])).astype(int)
    return [int(b - a) for a, b in zip(edges[:-1], edges[1:])], [int(e) for e in edges[:-1]]


def _draw_circuit(img: np.ndarray, box: tuple[int, int, int, int], rng: np.random.Generator) -> None:
    x, y, w, h = box
    raster.outline(img, x, y, w, h, 140)
    n = int(rng.integers(3, 6))
    cols = np.linspace(x + 1, x + w - 3, n)
    rows = rng.uniform(y + 2, y + h - 3, size=n)
    for k in range(n - 1):
        raster.line(img, rows[k], cols[k], rows[k + 1], cols[k + 1], INK)
    raster.dot(img, int(rows[0]), int(cols[0]), INK)
    raster.dot(img, int(rows[-1]), int(cols[-1]), INK)


def _draw_table(img: np.ndarray, box: tuple[int, int, int, int], rng: np.random.Generator) -> None:
    x, y, w, h = box
    raster.outline(img, x, y, w, h, INK)
    step = int(rng.integers(2, 4))
    for r in range(y + step, y + h - 1, step):
        img[r, x:x + w] = INK
    split = x + int(w * rng.uniform(0.3, 0.6))
    img[y:y + h, split] = INK


def generate_drawing(cfg: GeneratorConfig, rng: np.random.Generator, drawing_id: int = 0) -> Drawing:
    flags: dict[str, int] = {}
    n_c = int(rng.integers(cfg.circuits[0], cfg.circuits[1] + 1))
    patterns = list(cfg.pattern_mix)
    probs = np.array([cfg.pattern_mix[p] for p in patterns])
    counts = []
    for _ in range(n_c):
        pat = patterns[int(rng.choice(len(patterns), p=probs))]
        counts.append(0 if pat == "none" else 1 if pat == "one_to_one"
                      else int(rng.integers(cfg.many[0], cfg.many[1] + 1)))
    while sum(counts) > cfg.tables[1]:
        counts[int(np.argmax(counts))] -= 1
        flags["reduced_tables"] = flags.get("reduced_tables", 0) + 1
    while sum(counts) < cfg.tables[0]:
        counts[int(np.argmin(counts))] += 1

    n_rows = 1 if n_c <= 4 else 2
    n_cols = -(-n_c // n_rows)
    widths, xs = _split(cfg.content, n_cols, rng)
    heights, ys = _split(cfg.content, n_rows, rng)
    cells = [(r, c) for r in range(n_rows) for c in range(n_cols)]
    occupied = sorted(rng.choice(len(cells), size=n_c, replace=False).tolist())

    ox, oy = (int(v) for v in rng.integers(0, cfg.canvas - cfg.content + 1, size=2))
    img = np.full((cfg.canvas, cfg.canvas), PAPER, dtype=np.uint8)
    annotations: list[Annotation] = []
    relations: list[RelationLabel] = []
    next_id = 1
    for k, cell in enumerate(occupied):
        r, c = cells[cell]
        cx, cy, cw, ch = ox + xs[c], oy + ys[r], widths[c], heights[r]
        inner_w = cw - 4
        n_t = counts[k]
        circ_h = max(6, int(ch * rng.uniform(0.28, 0.4)))
        table_h = int(rng.integers(6, 10))
        while n_t and circ_h + 3 + n_t * (table_h + 2) > ch - 2:
            if table_h > 5:
                table_h -= 1
            else:
                n_t -= 1
                flags["reduced_tables"] = flags.get("reduced_tables", 0) + 1
        w_c = max(4, int(inner_w * rng.uniform(0.7, 1.0)))
        x_c = cx + 2 + int(rng.integers(0, inner_w - w_c + 1))
        y_c = cy + 2
        _draw_circuit(img, (x_c, y_c, w_c, circ_h), rng)
        circuit_id = next_id
        annotations.append(Annotation(circuit_id, BoundingBox(x_c, y_c, w_c, circ_h), int(InstanceType.CIRCUIT)))
        next_id += 1
        y_t = y_c + circ_h + 3
        for _ in range(n_t):
            w_t = max(4, int(inner_w * rng.uniform(0.6, 1.0)))
            x_t = cx + 2 + int(rng.integers(0, inner_w - w_t + 1))
            _draw_table(img, (x_t, y_t, w_t, table_h), rng)
            annotations.append(Annotation(next_id, BoundingBox(x_t, y_t, w_t, table_h), int(InstanceType.TABLE)))
            relations.append(RelationLabel(circuit_id, next_id))
            next_id += 1
            y_t += table_h + 2

    _add_distractors(img, annotations, cfg, rng)
    d = Drawing(drawing_id, np.repeat(img[:, :, None], 3, axis=2), annotations, relations, flags)
    d.validate()
    return d


def _add_distractors(img: np.ndarray, annotations: list[Annotation], cfg: GeneratorConfig,
                     rng: np.random.Generator) -> None:
    """Short strokes placed in free space, outside every annotation box."""
    occupied = np.zeros(img.shape, dtype=bool)
    for a in annotations:
        b = a.bbox
        occupied[int(b.y):int(b.y + b.h), int(b.x):int(b.x + b.w)] = True
    n = rng.poisson(cfg.distractor_density * 10)
    for _ in range(n):
        for _attempt in range(100):
            r, c = (int(v) for v in rng.integers(1, cfg.canvas - 8, size=2))
            horizontal = bool(rng.integers(0, 2))
            length = int(rng.integers(3, 8))
            r1, c1 = (r, c + length) if horizontal else (r + length, c)
            if not occupied[min(r, r1):max(r, r1) + 1, min(c, c1):max(c, c1) + 1].any():
                raster.line(img, r, c, r1, c1, 90)
                break


def generate_dataset(cfg: GeneratorConfig, n: int) -> Dataset:
    """``n`` drawings; drawing ``i`` uses its own stream so generation order is irrelevant."""
    return Dataset([generate_drawing(cfg, stream(cfg.seed, "drawing", i), i) for i in range(n)])


# -- pretraining pages ---------------------------------------------------

@dataclass(frozen=True)
class DocumentConfig:
    canvas: int = 128
    content: int = 112
    regions: tuple[int, int] = (4, 9)
    seed: int = 0


# (min height, max height, min width fraction, max width fraction)
_CLASS_GEOMETRY = {
    0: (12, 28, 0.85, 1.0),  # text
    1: (5, 8, 0.4, 0.9),  # title
    2: (12, 24, 0.6, 0.9),  # list
    3: (14, 28, 0.7, 1.0),  # table
    4: (18, 36, 0.5, 0.9),  # figure
}
_CLASS_WEIGHTS = np.array([0.35, 0.15, 0.15, 0.15, 0.2])


def _render_region(img: np.ndarray, cls: int, box: tuple[int, int, int, int], rng: np.random.Generator) -> None:
    """Per-class textures chosen to stay distinct after 14 px patching."""
    x, y, w, h = box
    if cls == 0:  # grey lines every other row, ragged last line
        for r in range(y + 1, y + h - 1, 2):
            end = x + w if r + 2 < y + h - 1 else x + int(w * rng.uniform(0.3, 0.8))
            img[r, x:end] = 110
    elif cls == 1:  # solid black bar
        raster.fill(img, x, y + 1, w, h - 2, INK)
    elif cls == 2:  # sparse bullets with short faint lines
        for r in range(y + 1, y + h - 3, 6):
            raster.dot(img, r, x, INK, size=3)
            img[r + 1, x + 6:x + 6 + int((w - 6) * rng.uniform(0.4, 0.8))] = 170
    elif cls == 3:  # dense black grid under a header band
        raster.fill(img, x, y, w, 4, INK)
        raster.outline(img, x, y, w, h, INK)
        for r in range(y + 6, y + h - 1, 3):
            img[r, x:x + w] = INK
        for c in range(x + 5, x + w - 2, 6):
            img[y:y + h, c] = INK
    else:  # mid-grey panel with a diagonal stroke
        raster.fill(img, x, y, w, h, 140)
        raster.line(img, y + h - 2, x + 1, y + 1, x + w - 2, 40, width=2)
        raster.outline(img, x, y, w, h, 100)


def generate_document(cfg: DocumentConfig, rng: np.random.Generator, doc_id: int = 0) -> Drawing:
    """A page of stacked blocks in one or two columns, labelled with 5 classes."""
    n_cols = int(rng.integers(1, 3))
    gap = 4
    col_w = (cfg.content - gap * (n_cols - 1)) // n_cols
    ox, oy = (int(v) for v in rng.integers(0, cfg.canvas - cfg.content + 1, size=2))
    img = np.full((cfg.canvas, cfg.canvas), PAPER, dtype=np.uint8)
    target = int(rng.integers(cfg.regions[0], cfg.regions[1] + 1))
    annotations: list[Annotation] = []
    col_y = [oy] * n_cols
    first = True
    for _ in range(target * 3):
        if len(annotations) >= target:
            break
        col = int(np.argmin(col_y))
        cls = 1 if first else int(rng.choice(5, p=_CLASS_WEIGHTS))
        first = False
        hmin, hmax, fmin, fmax = _CLASS_GEOMETRY[cls]
        h = int(rng.integers(hmin, hmax + 1))
        if col_y[col] + h > oy + cfg.content:
            if cls == 1 or col_y[col] + hmin > oy + cfg.content:
                col_y[col] = oy + cfg.content
                if all(v >= oy + cfg.content - 5 for v in col_y):
                    break
                continue
            h = oy + cfg.content - col_y[col]
        w = max(6, int(col_w * rng.uniform(fmin, fmax)))
        x = ox + col * (col_w + gap) + (0 if cls != 4 else int(rng.integers(0, col_w - w + 1)))
        y = col_y[col]
        _render_region(img, cls, (x, y, w, h), rng)
        annotations.append(Annotation(len(annotations) + 1, BoundingBox(x, y, w, h), cls))
        col_y[col] = y + h + int(rng.integers(2, 5))
    d = Drawing(doc_id, np.repeat(img[:, :, None], 3, axis=2), annotations, [])
    d.validate(PRETRAIN_CATEGORIES)
    return d


def generate_documents(cfg: DocumentConfig, n: int) -> Dataset:
    return Dataset([generate_document(cfg, stream(cfg.seed, "document", i), i) for i in range(n)],
                   dict(PRETRAIN_CATEGORIES))

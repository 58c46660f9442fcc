"""Dataset directories: ``manifest.json`` + ``images/*.ppm``."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..object_encoder import BoundingBox
from .types import RELATION_CATEGORIES, Annotation, Dataset, Drawing, RelationLabel

MANIFEST = "manifest.json"


class ManifestError(ValueError):
    """The manifest or an image file is malformed."""


# -- netpbm --------------------------------------------------------------

def write_ppm(path, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"PPM needs [H, W, 3] uint8, got {pixels.shape}")
    h, w, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ManifestError(f"{path}: truncated header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != magic:
        raise ManifestError(f"{path}: expected {magic.decode()} image, got {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ManifestError(f"{path}: only 8-bit images are supported")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * channels, offset=pos)
    return data.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path) -> np.ndarray:
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)


# -- manifest ------------------------------------------------------------

def _num(v):
    f = float(v)
    return int(f) if f.is_integer() else f


def to_manifest(dataset: Dataset) -> dict:
    images, annotations, relations = [], [], []
    for d in dataset.drawings:
        images.append({"id": d.id, "file": f"images/{d.id:06d}.ppm", "width": d.width, "height": d.height})
        for a in d.annotations:
            annotations.append({"id": a.id, "image_id": d.id,
                                "bbox": [_num(v) for v in a.bbox.as_list()], "category_id": a.category})
        for r in d.relations:
            relations.append({"image_id": d.id, "circuit_id": r.circuit_id, "table_id": r.table_id})
    return {
        "categories": [{"id": k, "name": v} for k, v in sorted(dataset.categories.items())],
        "images": images,
        "annotations": annotations,
        "relations": relations,
    }


def save_dataset(dataset: Dataset, directory) -> None:
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    manifest = to_manifest(dataset)
    for d, rec in zip(dataset.drawings, manifest["images"]):
        write_ppm(root / rec["file"], d.image)
    with open(root / MANIFEST, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def load_dataset(directory) -> Dataset:
    root = Path(directory)
    path = root / MANIFEST
    if not path.exists():
        if not root.exists() or not any(os.scandir(root)):
            return Dataset()
        raise ManifestError(f"{root}: no {MANIFEST}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON ({e})") from None
    return from_manifest(manifest, root)


def from_manifest(manifest: dict, root: Path) -> Dataset:
    try:
        categories = {int(c["id"]): str(c["name"]) for c in manifest.get("categories", [])}
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"bad categories record: {e}") from None
    drawings: dict[int, Drawing] = {}
    for rec in manifest.get("images", []):
        try:
            img_id = int(rec["id"])
            pixels = read_ppm(root / rec["file"])
            if pixels.shape[:2] != (int(rec["height"]), int(rec["width"])):
                raise ManifestError(f"image {img_id}: size does not match manifest")
        except (KeyError, TypeError, ValueError, OSError) as e:
            raise ManifestError(f"image record {rec!r}: {e}") from None
        if img_id in drawings:
            raise ManifestError(f"image {img_id}: duplicate id")
        drawings[img_id] = Drawing(img_id, pixels)
    for rec in manifest.get("annotations", []):
        try:
            d = drawings[int(rec["image_id"])]
            x, y, w, h = rec["bbox"]
            d.annotations.append(Annotation(int(rec["id"]), BoundingBox(x, y, w, h), int(rec["category_id"])))
        except KeyError as e:
            raise ManifestError(f"annotation {rec!r}: unknown image or missing field {e}") from None
        except (TypeError, ValueError) as e:
            raise ManifestError(f"annotation {rec!r}: {e}") from None
    for rec in manifest.get("relations", []):
        try:
            d = drawings[int(rec["image_id"])]
            d.relations.append(RelationLabel(int(rec["circuit_id"]), int(rec["table_id"])))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"relation {rec!r}: {e}") from None
    for d in drawings.values():
        try:
            d.validate(categories or RELATION_CATEGORIES)
        except ValueError as e:
            raise ManifestError(str(e)) from None
    return Dataset(list(drawings.values()), categories)

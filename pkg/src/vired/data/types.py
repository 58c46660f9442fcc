from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..object_encoder import BoundingBox, InstanceType

RELATION_CATEGORIES = {0: "circuit", 1: "table"}
PRETRAIN_CATEGORIES = {0: "text", 1: "title", 2: "list", 3: "table", 4: "figure"}


@dataclass
class Annotation:
    id: int
    bbox: BoundingBox
    category: int


@dataclass(frozen=True)
class RelationLabel:
    circuit_id: int
    table_id: int


@dataclass
class Drawing:
    id: int
    image: np.ndarray  # uint8 [H, W, 3]
    annotations: list[Annotation] = field(default_factory=list)
    relations: list[RelationLabel] = field(default_factory=list)
    flags: dict[str, int] = field(default_factory=dict, compare=False)

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    def annotation(self, ann_id: int) -> Annotation:
        for a in self.annotations:
            if a.id == ann_id:
                return a
        raise KeyError(ann_id)

    def validate(self, categories: dict[int, str] = RELATION_CATEGORIES) -> None:
        ids = [a.id for a in self.annotations]
        if len(set(ids)) != len(ids):
            raise ValueError(f"drawing {self.id}: duplicate annotation ids")
        by_id = {a.id: a for a in self.annotations}
        for a in self.annotations:
            if a.category not in categories:
                raise ValueError(f"drawing {self.id}: unknown category {a.category}")
            if not a.bbox.inside(self.width, self.height):
                raise ValueError(f"drawing {self.id}: annotation {a.id} leaves the image")
        if len(set(self.relations)) != len(self.relations):
            raise ValueError(f"drawing {self.id}: duplicate relations")
        for r in self.relations:
            c, t = by_id.get(r.circuit_id), by_id.get(r.table_id)
            if c is None or t is None:
                raise ValueError(f"drawing {self.id}: relation {r} references a missing annotation")
            if c.category != InstanceType.CIRCUIT or t.category != InstanceType.TABLE:
                raise ValueError(f"drawing {self.id}: relation {r} must join a circuit and a table")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Drawing):
            return NotImplemented
        return (
            self.id == other.id
            and self.image.shape == other.image.shape
            and np.array_equal(self.image, other.image)
            and self.annotations == other.annotations
            and sorted(self.relations, key=_rkey) == sorted(other.relations, key=_rkey)
        )


def _rkey(r: RelationLabel) -> tuple[int, int]:
    return r.circuit_id, r.table_id


@dataclass
class Dataset:
    drawings: list[Drawing] = field(default_factory=list)
    categories: dict[int, str] = field(default_factory=lambda: dict(RELATION_CATEGORIES))

    def __len__(self) -> int:
        return len(self.drawings)

    def __iter__(self):
        return iter(self.drawings)

    def __getitem__(self, i):
        return self.drawings[i]

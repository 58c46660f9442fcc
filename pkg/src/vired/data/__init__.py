from ..model import Sample
from ..object_encoder import BoundingBox
from ..tensorcore import stream
from .augment import augment, center_crop, crop_window_range, d4, d4_array, d4_box, hflip, hflip_box, scale_to, vflip, vflip_box
from .generator import DocumentConfig, GeneratorConfig, generate_dataset, generate_document, generate_documents, generate_drawing
from .io import ManifestError, load_dataset, read_pgm, read_ppm, save_dataset, write_pgm, write_ppm
from .types import PRETRAIN_CATEGORIES, RELATION_CATEGORIES, Annotation, Dataset, Drawing, RelationLabel


def split(dataset: Dataset, train_fraction: float = 0.9, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random drawing-level split; train gets ``round(train_fraction * N)`` drawings."""
    n = len(dataset)
    n_train = int(train_fraction * n + 0.5)
    order = stream(seed, "split").permutation(n)
    pick = lambda idx: Dataset([dataset.drawings[i] for i in sorted(idx)], dict(dataset.categories))  # noqa: E731
    return pick(order[:n_train]), pick(order[n_train:])


def to_sample(d: Drawing, image_size: int) -> Sample:
    """Bring a drawing to model geometry (nearest resize) as a :class:`Sample`."""
    d = scale_to(d, image_size)
    return Sample(
        pixels=d.image,
        boxes=[a.bbox for a in d.annotations],
        categories=[a.category for a in d.annotations],
        ann_ids=[a.id for a in d.annotations],
        relations={(r.circuit_id, r.table_id) for r in d.relations},
        image_id=d.id,
    )


__all__ = [
    "Annotation", "BoundingBox", "Dataset", "DocumentConfig", "Drawing", "GeneratorConfig", "ManifestError",
    "PRETRAIN_CATEGORIES", "RELATION_CATEGORIES", "RelationLabel", "augment", "center_crop", "crop_window_range", "d4",
    "d4_array", "d4_box", "generate_dataset", "generate_document", "generate_documents", "generate_drawing",
    "hflip", "hflip_box", "load_dataset", "read_pgm", "read_ppm", "save_dataset", "scale_to", "split",
    "to_sample", "vflip", "vflip_box", "write_pgm", "write_ppm",
]

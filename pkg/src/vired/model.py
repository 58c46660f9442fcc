"""The assembled relation model and its batched forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .object_encoder import BoundingBox, ObjectEncoder, make_object_tokens, rasterize_mask
from .relation_decoder import RelationDecoder, RelationHead, enumerate_pairs, pair_logits
from .tensorcore import MLP, Module, Tensor, ops, param, stream
from .vision_encoder import VisionEncoder, to_image_tensor

RELATION = "relation"
PRETRAIN = "pretrain"


@dataclass
class Sample:
    """One drawing already brought to model geometry (square ``image_size`` pixels)."""

    pixels: np.ndarray  # uint8 [S, S, 3]
    boxes: list[BoundingBox]
    categories: list[int]
    ann_ids: list[int] = field(default_factory=list)
    relations: set[tuple[int, int]] = field(default_factory=set)  # (circuit ann id, table ann id)
    image_id: int = 0


@dataclass
class Batch:
    images: np.ndarray  # [B, 3, S, S]
    masks: np.ndarray  # [N_tot, 1, M, M]
    categories: np.ndarray  # [N_tot]
    gather: np.ndarray  # [B * N_max] -> token row, N_tot = padding row
    scatter: np.ndarray  # [N_tot] -> padded slot
    object_mask: np.ndarray  # [B, N_max]
    circuit_rows: np.ndarray  # [P] flat token rows
    table_rows: np.ndarray  # [P]
    pair_labels: np.ndarray  # [P]
    pair_image: np.ndarray  # [P] batch index
    pair_ids: list[tuple[int, int, int]]  # (image_id, circuit ann id, table ann id)

    @property
    def size(self) -> int:
        return self.images.shape[0]


def collate(samples: list[Sample], cfg: ModelConfig, with_pairs: bool = True) -> Batch:
    s = cfg.vision.image_size
    m = cfg.objects.mask_size
    images = np.stack([to_image_tensor(x.pixels) for x in samples])
    if images.shape[-1] != s:
        raise ValueError(f"samples must be {s}px, got {images.shape[-1]}px")
    n_max = max([len(x.boxes) for x in samples] + [1])
    masks, cats, gather, scatter = [], [], [], []
    obj_mask = np.zeros((len(samples), n_max), dtype=bool)
    ci, ti, labels, pimg, pids = [], [], [], [], []
    row = 0
    for b, smp in enumerate(samples):
        base = row
        for k, (box, cat) in enumerate(zip(smp.boxes, smp.categories)):
            masks.append(rasterize_mask(box, s, m))
            cats.append(cat)
            scatter.append(b * n_max + k)
            obj_mask[b, k] = True
            row += 1
        if with_pairs:
            for p in enumerate_pairs(smp.categories):
                ci.append(base + p.circuit_idx)
                ti.append(base + p.table_idx)
                cid, tid = smp.ann_ids[p.circuit_idx], smp.ann_ids[p.table_idx]
                labels.append(int((cid, tid) in smp.relations))
                pimg.append(b)
                pids.append((smp.image_id, cid, tid))
    n_tot = row
    gather = np.full(len(samples) * n_max, n_tot, dtype=np.int64)
    gather[np.asarray(scatter, dtype=np.int64)] = np.arange(n_tot)
    return Batch(
        images=images,
        masks=np.stack(masks) if masks else np.zeros((0, 1, m, m), np.float32),
        categories=np.asarray(cats, dtype=np.int64),
        gather=gather,
        scatter=np.asarray(scatter, dtype=np.int64),
        object_mask=obj_mask,
        circuit_rows=np.asarray(ci, dtype=np.int64),
        table_rows=np.asarray(ti, dtype=np.int64),
        pair_labels=np.asarray(labels, dtype=np.int64),
        pair_image=np.asarray(pimg, dtype=np.int64),
        pair_ids=pids,
    )


class ViRED(Module):
    """Vision encoder + object encoder + relation decoder + task head.

    ``mode="relation"`` carries the 2-row type table and the pair head;
    ``mode="pretrain"`` has no type table and a 5-way region classifier.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, mode: str = RELATION, use_type: bool = True):
        if mode not in (RELATION, PRETRAIN):
            raise ValueError(f"unknown mode {mode!r}")
        self.cfg = cfg
        self.mode = mode
        self.use_type = use_type and mode == RELATION
        rng = stream(seed, "init")
        d = cfg.dim
        self.vision = VisionEncoder(cfg.vision, rng, out_dim=d)
        self.objects = ObjectEncoder(cfg.objects, rng)
        self.decoder = RelationDecoder(cfg.decoder, rng)
        if mode == RELATION:
            self.type_embed = param(np.zeros((cfg.n_types, d)))
            self.relation_head = RelationHead(d, rng)
        else:
            self.cls_head = MLP([d, d, cfg.n_pretrain_classes], rng, init="uniform")

    def fused_tokens(self, batch: Batch, rng: np.random.Generator | None = None) -> Tensor:
        """Decoder output for every real object, [N_tot, D] in collate order."""
        feats = self.vision(batch.images)
        emb = self.objects(batch.masks)
        tokens = make_object_tokens(emb, batch.categories, getattr(self, "type_embed", None), self.use_type)
        d = tokens.shape[-1]
        b, n_max = batch.object_mask.shape
        padded = ops.concat([tokens, Tensor(np.zeros((1, d)))], axis=0)
        padded = ops.reshape(ops.index(padded, batch.gather), (b, n_max, d))
        fused = self.decoder(padded, feats, object_mask=batch.object_mask, rng=rng)
        return ops.index(ops.reshape(fused, (b * n_max, d)), batch.scatter)

    def relation_logits(self, batch: Batch, rng=None) -> Tensor:
        fused = self.fused_tokens(batch, rng)
        return pair_logits(fused, batch.circuit_rows, batch.table_rows, self.relation_head)

    def region_logits(self, batch: Batch, rng=None) -> Tensor:
        return self.cls_head(self.fused_tokens(batch, rng))


OPTIM_PREFIX = "optim."


def to_checkpoint(model: ViRED, metadata: dict | None = None, optim_state=None):
    """Parameters (and optionally AdamW moments) as a :class:`Checkpoint`."""
    from .checkpoint import Checkpoint

    meta = {"config": model.cfg.to_dict(), "mode": model.mode, "use_type": model.use_type}
    meta.update(metadata or {})
    tensors = model.state_dict()
    if optim_state is not None:
        meta["optim_step"] = optim_state.step
        for name in list(tensors):
            if name in optim_state.m:
                tensors[f"{OPTIM_PREFIX}m.{name}"] = optim_state.m[name].copy()
                tensors[f"{OPTIM_PREFIX}v.{name}"] = optim_state.v[name].copy()
    return Checkpoint(tensors, meta)


def from_checkpoint(ckpt) -> ViRED:
    from .checkpoint import CheckpointFormatError

    try:
        cfg = ModelConfig.from_dict(ckpt.metadata["config"])
        mode = ckpt.metadata["mode"]
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError(f"checkpoint metadata lacks model config: {e}") from None
    model = ViRED(cfg, mode=mode, use_type=ckpt.metadata.get("use_type", True))
    state = {k: v for k, v in ckpt.tensors.items() if not k.startswith(OPTIM_PREFIX)}
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(str(e)) from None
    return model


def restore_optim_state(ckpt, state) -> None:
    state.step = int(ckpt.metadata.get("optim_step", 0))
    for key, arr in ckpt.tensors.items():
        if key.startswith(OPTIM_PREFIX + "m."):
            state.m[key[len(OPTIM_PREFIX) + 2:]] = arr.copy()
        elif key.startswith(OPTIM_PREFIX + "v."):
            state.v[key[len(OPTIM_PREFIX) + 2:]] = arr.copy()

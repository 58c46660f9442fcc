"""Masked-region classification pretraining and the pretrain -> finetune weight transfer."""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint, CheckpointFormatError
from .config import ModelConfig
from .model import PRETRAIN, RELATION, Sample, ViRED, collate
from .object_encoder import BoundingBox
from .tensorcore import Tensor, fan_in_uniform, no_grad, stream

SHARED_PREFIXES = ("vision.", "objects.", "decoder.")


def classify_regions(pixels: np.ndarray, boxes: list[BoundingBox], model: ViRED) -> Tensor:
    """[N, 5] region-class logits for ``boxes`` on one model-sized image (eval mode)."""
    if model.mode != PRETRAIN:
        raise ValueError("classify_regions needs a pretrain-mode model")
    if not boxes:
        return Tensor(np.zeros((0, model.cfg.n_pretrain_classes)))
    batch = collate([Sample(pixels, list(boxes), [0] * len(boxes))], model.cfg, with_pairs=False)
    model.eval()
    with no_grad():
        return model.region_logits(batch)


def transfer_to_finetune(pretrain_ckpt: Checkpoint, seed: int = 0) -> Checkpoint:
    """Relation-mode checkpoint initialised from a pretraining checkpoint.

    Shared encoder/decoder tensors pass through bit-identical, the type table
    starts at zero, the relation head is drawn from Uniform(-a, a) with
    a = sqrt(1 / fan_in), and the pretraining classifier is dropped.
    """
    meta = pretrain_ckpt.metadata
    if "config" not in meta:
        raise CheckpointFormatError("checkpoint metadata lacks model config")
    # a fresh relation-mode model fixes the exact tensor names and shapes expected
    template = ViRED(ModelConfig.from_dict(meta["config"]), seed=seed, mode=RELATION)
    expected = template.parameters()
    rng = stream(seed, "finetune-head")
    out: dict[str, np.ndarray] = {}
    for name, p in expected.items():
        if name.startswith(SHARED_PREFIXES):
            if name not in pretrain_ckpt.tensors:
                raise CheckpointFormatError(f"pretrain checkpoint is missing {name!r}")
            src = pretrain_ckpt.tensors[name]
            if src.shape != p.shape:
                raise CheckpointFormatError(f"{name!r}: shape {src.shape} != expected {p.shape}")
            out[name] = src
        elif name == "type_embed":
            out[name] = np.zeros(p.shape, dtype=np.float32)
        elif name.startswith("relation_head."):
            # weight [in, out] and bias [out] of one layer share that layer's fan-in
            layer = name.rsplit(".", 1)[0]
            fan_in = expected[layer + ".weight"].shape[0]
            out[name] = fan_in_uniform(rng, p.shape, fan_in)
        else:
            raise CheckpointFormatError(f"no transfer rule for {name!r}")
    new_meta = {k: v for k, v in meta.items() if k not in ("optim_step", "step", "epoch", "best")}
    new_meta.update({"mode": RELATION, "use_type": True, "init": "transfer", "transfer_seed": seed})
    return Checkpoint(out, new_meta)

"""Training loops, evaluation driver and checkpoint bookkeeping."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .checkpoint import Checkpoint
from .config import ModelConfig, preset
from .data import Dataset, augment, center_crop, load_dataset, to_sample
from .model import PRETRAIN, RELATION, ViRED, collate, from_checkpoint, restore_optim_state, to_checkpoint
from .tensorcore import AdamWState, LrSchedule, adamw_step, lr_at, no_grad, ops, stream
from .tensorcore.tensor import NonFiniteError

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Training hit a non-finite loss or another unrecoverable state."""


@dataclass
class TrainConfig:
    preset: str = "desk"
    model_overrides: dict = field(default_factory=dict)
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    base_lr: float = 1e-4
    final_lr: float = 1e-5
    warmup_fraction: float = 0.2
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-3
    augment: bool = True
    use_type: bool = True
    pos_weight_clip: tuple[float, float] = (1.0, 10.0)
    train_data: str | None = None
    valid_data: str | None = None
    checkpoint_dir: str | None = None
    log_path: str | None = None
    resume: str | None = None

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")

    def model_config(self) -> ModelConfig:
        return preset(self.preset, **self.model_overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("betas", "pos_weight_clip"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def prepare(drawing, image_size: int, rng: np.random.Generator | None, training: bool, reorient: bool = True):
    """Augmented (training) or centre-cropped (eval) model-sized sample."""
    if training:
        drawing = augment(drawing, rng, training=True, crop_size=image_size, reorient=reorient)
    else:
        drawing = center_crop(drawing, image_size)
    return to_sample(drawing, image_size)


def _batches(n: int, size: int, order: np.ndarray | None = None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, size):
        yield idx[start:start + size]


def positive_weight(dataset: Dataset, clip: tuple[float, float]) -> float:
    """negatives / positives over all candidate pairs, clipped."""
    pos = neg = 0
    for d in dataset:
        n_c = sum(a.category == 0 for a in d.annotations)
        n_t = sum(a.category == 1 for a in d.annotations)
        pos += len(d.relations)
        neg += n_c * n_t - len(d.relations)
    if pos == 0:
        return clip[1]
    return float(np.clip(neg / pos, *clip))


class _Logger:
    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: dict) -> None:
        log.info("%s", record)
        if self.path:
            with open(self.path, "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class EvalResult:
    metrics: dict
    scores: np.ndarray
    labels: np.ndarray
    pair_ids: list
    skipped: int


def evaluate(model: ViRED, dataset: Dataset, batch_size: int = 8) -> EvalResult:
    """Pool has-relation scores over every candidate pair of every drawing.

    Each image goes through the vision encoder exactly once. Drawings without a
    circuit-table pair are skipped and counted.
    """
    model.eval()
    size = model.cfg.vision.image_size
    scores, labels, ids = [], [], []
    skipped = 0
    usable = []
    for d in dataset:
        cats = [a.category for a in d.annotations]
        if 0 in cats and 1 in cats:
            usable.append(d)
        else:
            skipped += 1
    with no_grad():
        for idx in _batches(len(usable), batch_size):
            batch = collate([prepare(usable[i], size, None, False) for i in idx], model.cfg)
            logits = model.relation_logits(batch)
            probs = ops.softmax(logits, axis=-1).data[:, 1].astype(np.float64)
            scores.append(probs)
            labels.append(batch.pair_labels)
            ids.extend(batch.pair_ids)
    s = np.concatenate(scores) if scores else np.zeros(0)
    y = np.concatenate(labels).astype(bool) if labels else np.zeros(0, dtype=bool)
    out = metrics.summarize(s, y)
    return EvalResult(out, s, y, ids, skipped)


def predict_dataset(model: ViRED, dataset: Dataset, batch_size: int = 8) -> list[dict]:
    """``[{image_id, pairs: [{circuit_id, table_id, probability}]}]`` in dataset order."""
    res = evaluate(model, dataset, batch_size)
    by_image: dict[int, list[dict]] = {d.id: [] for d in dataset}
    for (image_id, cid, tid), p in zip(res.pair_ids, res.scores):
        by_image[image_id].append({"circuit_id": cid, "table_id": tid, "probability": float(p)})
    return [{"image_id": d.id, "pairs": by_image[d.id]} for d in dataset]


def evaluate_regions(model: ViRED, dataset: Dataset, batch_size: int = 8) -> dict:
    model.eval()
    size = model.cfg.vision.image_size
    correct = total = 0
    with no_grad():
        for idx in _batches(len(dataset), batch_size):
            samples = [prepare(dataset[i], size, None, False) for i in idx]
            batch = collate(samples, model.cfg, with_pairs=False)
            if batch.categories.size == 0:
                continue
            pred = model.region_logits(batch).data.argmax(axis=1)
            correct += int((pred == batch.categories).sum())
            total += batch.categories.size
    return {"accuracy": correct / total if total else 1.0, "regions": total}


def _load_split(path, name):
    if path is None:
        raise ValueError(f"no {name} dataset given")
    return load_dataset(path)


def _run(cfg: TrainConfig, model: ViRED, train: Dataset, valid: Dataset, task: str) -> Checkpoint:
    mcfg = model.cfg
    size = mcfg.vision.image_size
    n_batches = -(-len(train) // cfg.batch_size)
    schedule = LrSchedule(cfg.epochs * n_batches, cfg.base_lr, cfg.final_lr, cfg.warmup_fraction)
    state = AdamWState(cfg.betas[0], cfg.betas[1], cfg.eps, cfg.weight_decay)
    params = model.parameters()
    logger = _Logger(cfg.log_path)
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    meta = {"preset": cfg.preset, "seed": cfg.seed, "task": task}

    start_epoch = 0
    best_score, best = -1.0, None
    if cfg.resume:
        last = Checkpoint.load(cfg.resume)
        model.load_state_dict({k: v for k, v in last.tensors.items() if k in params})
        restore_optim_state(last, state)
        start_epoch = int(last.metadata["epoch"]) + 1
        best_score = float(last.metadata.get("best_score", -1.0))
        if ckpt_dir and (ckpt_dir / "best.ckpt").exists():
            best = Checkpoint.load(ckpt_dir / "best.ckpt")

    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.time()
        rng = stream(cfg.seed, "epoch", epoch)
        pos_w = positive_weight(train, cfg.pos_weight_clip) if task == RELATION else None
        order = rng.permutation(len(train))
        model.train()
        losses = []
        for idx in _batches(len(train), cfg.batch_size, order):
            # documents keep their reading direction, so pretraining only crops
            samples = [prepare(train[i], size, rng, cfg.augment, reorient=task == RELATION) for i in idx]
            batch = collate(samples, mcfg, with_pairs=task == RELATION)
            model.zero_grad()
            try:
                if task == RELATION:
                    if batch.pair_labels.size == 0:
                        state.step += 1
                        continue
                    logits = model.relation_logits(batch, rng)
                    loss = ops.cross_entropy(logits, batch.pair_labels, class_weights=[1.0, pos_w])
                else:
                    logits = model.region_logits(batch, rng)
                    loss = ops.cross_entropy(logits, batch.categories)
            except NonFiniteError as e:
                raise TrainingError(f"non-finite loss at step {state.step + 1}: {e}") from None
            loss.backward()
            lr = lr_at(schedule, min(state.step + 1, schedule.total_steps))
            adamw_step(params, state, lr)
            losses.append(float(loss.data))
        train_loss = float(np.mean(np.asarray(losses, dtype=np.float64))) if losses else float("nan")
        lr_now = lr_at(schedule, min(state.step, schedule.total_steps))
        logger.write({"epoch": epoch, "split": "train", "loss": train_loss, "lr": lr_now,
                      "seconds": round(time.time() - t0, 3)})

        if task == RELATION:
            res = evaluate(model, valid, cfg.batch_size)
            record = {"epoch": epoch, "split": "valid", "loss": None, "lr": lr_now, **res.metrics}
            score = res.metrics["map"]
        else:
            res = evaluate_regions(model, valid, cfg.batch_size)
            record = {"epoch": epoch, "split": "valid", "loss": None, "lr": lr_now, **res}
            score = res["accuracy"]
        logger.write(record)
        if score > best_score:
            best_score = score
            best = to_checkpoint(model, {**meta, "epoch": epoch, "step": state.step, "best_score": score})
            if ckpt_dir:
                best.save(ckpt_dir / "best.ckpt")
        if ckpt_dir:
            to_checkpoint(model, {**meta, "epoch": epoch, "step": state.step, "best_score": best_score},
                          optim_state=state).save(ckpt_dir / "last.ckpt")
    return best


def train_finetune(cfg: TrainConfig, init: Checkpoint | None = None,
                   train: Dataset | None = None, valid: Dataset | None = None) -> Checkpoint:
    """Class-weighted relation cross-entropy; returns the best-by-validation-mAP checkpoint.

    ``init`` should come from :func:`vired.pretrain.transfer_to_finetune`;
    without it the model starts from random weights.
    """
    train = train if train is not None else _load_split(cfg.train_data, "train")
    valid = valid if valid is not None else _load_split(cfg.valid_data, "valid")
    if init is not None:
        model = from_checkpoint(init)
        if model.mode != RELATION:
            raise ValueError("finetune init must be a relation-mode checkpoint (run transfer_to_finetune)")
        model.use_type = cfg.use_type
    else:
        model = ViRED(cfg.model_config(), seed=cfg.seed, mode=RELATION, use_type=cfg.use_type)
    return _run(cfg, model, train, valid, RELATION)


def train_pretrain(cfg: TrainConfig, train: Dataset | None = None, valid: Dataset | None = None) -> Checkpoint:
    """Region-classification cross-entropy; returns the best-by-validation-accuracy checkpoint."""
    train = train if train is not None else _load_split(cfg.train_data, "train")
    valid = valid if valid is not None else _load_split(cfg.valid_data, "valid")
    model = ViRED(cfg.model_config(), seed=cfg.seed, mode=PRETRAIN)
    return _run(cfg, model, train, valid, PRETRAIN)


def read_log(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


__all__ = [
    "EvalResult", "TrainConfig", "TrainingError", "evaluate", "evaluate_regions", "positive_weight",
    "predict_dataset", "prepare", "read_log", "train_finetune", "train_pretrain",
]

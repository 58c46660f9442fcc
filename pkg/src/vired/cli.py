"""``vired`` command-line interface.

Every command takes ``--config FILE.json`` and repeatable ``--set key=value``
overrides (values parse as JSON, else as plain strings; ``model.key=value``
goes into the model preset overrides). Exit codes: 0 success, 2 user error,
3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import flops as flops_mod
from ._threads import requested_threads
from .checkpoint import Checkpoint, CheckpointFormatError
from .config import preset
from .data import (
    Dataset, DocumentConfig, GeneratorConfig, ManifestError, generate_dataset, generate_documents,
    load_dataset, save_dataset, split, write_ppm,
)
from .data.raster import line, outline
from .model import PRETRAIN, from_checkpoint
from .pretrain import transfer_to_finetune
from .tensorcore import ConfigError, NonFiniteError, ShapeError
from .trainer import TrainConfig, TrainingError, evaluate, predict_dataset, train_finetune, train_pretrain

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 2, 3

CIRCUIT_COLOR = (0, 0, 255)
TABLE_COLOR = (0, 160, 0)
LINK_COLOR = (220, 0, 0)


class UserError(Exception):
    """Bad input from the command line, a config file or a data file."""


def parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UserError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise UserError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(cfg, dict):
            raise UserError(f"config file {path} must hold a JSON object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UserError(f"--set expects key=value, got {item!r}")
        if key.startswith("model."):
            cfg.setdefault("model_overrides", {})[key[len("model."):]] = parse_value(raw)
        else:
            cfg[key] = parse_value(raw)
    return cfg


def _take(cfg: dict, cls) -> dict:
    names = {f.name for f in fields(cls)}
    return {k: cfg.pop(k) for k in list(cfg) if k in names}


def _reject_unknown(cfg: dict, command: str) -> None:
    if cfg:
        raise UserError(f"{command}: unknown config keys {sorted(cfg)}")


def _existing_dataset(path: str | None, what: str) -> Dataset:
    if not path:
        raise UserError(f"no {what} dataset given")
    p = Path(path)
    if not (p / "manifest.json").is_file():
        raise UserError(f"{what} dataset not found: {p / 'manifest.json'}")
    return load_dataset(p)


def _load_checkpoint(path: str | None) -> Checkpoint:
    if not path:
        raise UserError("no checkpoint given")
    try:
        return Checkpoint.load(path)
    except FileNotFoundError:
        raise UserError(f"checkpoint not found: {path}") from None


def _tupled(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def cmd_gen_data(args, cfg: dict) -> int:
    kind = cfg.pop("kind", args.kind)
    n = int(cfg.pop("n", args.n))
    train_fraction = cfg.pop("split", args.split)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if kind == "relation":
        gen_cfg = GeneratorConfig(**_tupled(_take(cfg, GeneratorConfig)))
        _reject_unknown(cfg, "gen-data")
        dataset = generate_dataset(gen_cfg, n)
    elif kind == "documents":
        gen_cfg = DocumentConfig(**_tupled(_take(cfg, DocumentConfig)))
        _reject_unknown(cfg, "gen-data")
        dataset = generate_documents(gen_cfg, n)
    else:
        raise UserError(f"unknown dataset kind {kind!r} (relation | documents)")
    out = Path(args.out)
    if train_fraction is None:
        save_dataset(dataset, out)
    else:
        train, valid = split(dataset, float(train_fraction), gen_cfg.seed)
        save_dataset(train, out / "train")
        save_dataset(valid, out / "valid")
    return EXIT_OK


def _train_config(args, cfg: dict) -> TrainConfig:
    for key in ("train_data", "valid_data", "checkpoint_dir", "resume", "seed", "epochs"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if args.out:
        cfg.setdefault("checkpoint_dir", args.out)
        cfg.setdefault("log_path", str(Path(args.out) / "log.jsonl"))
    unknown = set(cfg) - {f.name for f in fields(TrainConfig)}
    if unknown:
        raise UserError(f"unknown config keys {sorted(unknown)}")
    return TrainConfig.from_dict(cfg)


def cmd_pretrain(args, cfg: dict) -> int:
    tc = _train_config(args, cfg)
    train = _existing_dataset(tc.train_data, "train")
    valid = _existing_dataset(tc.valid_data, "valid")
    best = train_pretrain(tc, train, valid)
    if tc.checkpoint_dir:
        best.save(Path(tc.checkpoint_dir) / "best.ckpt")
    return EXIT_OK


def cmd_finetune(args, cfg: dict) -> int:
    tc = _train_config(args, cfg)
    train = _existing_dataset(tc.train_data, "train")
    valid = _existing_dataset(tc.valid_data, "valid")
    init = None
    if args.init:
        init = _load_checkpoint(args.init)
        if init.metadata.get("mode") == PRETRAIN:
            init = transfer_to_finetune(init, seed=tc.seed)
    best = train_finetune(tc, init, train, valid)
    if tc.checkpoint_dir:
        best.save(Path(tc.checkpoint_dir) / "best.ckpt")
    return EXIT_OK


def _relation_model(path):
    model = from_checkpoint(_load_checkpoint(path))
    if model.mode == PRETRAIN:
        raise UserError("checkpoint is a pretraining checkpoint; eval/predict need a finetuned one")
    return model


def cmd_eval(args, cfg: dict) -> int:
    _reject_unknown(cfg, "eval")
    model = _relation_model(args.checkpoint)
    res = evaluate(model, _existing_dataset(args.data, "eval"))
    print(json.dumps({k: res.metrics[k] for k in ("map", "precision", "recall", "accuracy")}))
    return EXIT_OK


def cmd_predict(args, cfg: dict) -> int:
    _reject_unknown(cfg, "predict")
    model = _relation_model(args.checkpoint)
    preds = predict_dataset(model, _existing_dataset(args.data, "predict"))
    text = json.dumps(preds, indent=1)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_flops(args, cfg: dict) -> int:
    name = cfg.pop("preset", args.preset)
    n_max = int(cfg.pop("n_max", args.n_max))
    image_size = cfg.pop("image_size", args.image_size)
    norm_cost = int(cfg.pop("norm_cost", args.norm_cost))
    model_cfg = preset(name, **cfg.pop("model_overrides", {}))
    _reject_unknown(cfg, "flops")
    text = flops_mod.sweep_csv(model_cfg, n_max, image_size, norm_cost)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def render_drawing(drawing, pairs: list[dict], threshold: float) -> tuple[np.ndarray, list[dict]]:
    """Overlay boxes (circuits blue, tables green) and links with probability >= threshold."""
    img = drawing.image.copy()
    boxes = {a.id: a for a in drawing.annotations}
    for a in drawing.annotations:
        x, y, w, h = (int(round(v)) for v in a.bbox.as_list())
        outline(img, x, y, max(w, 1), max(h, 1), CIRCUIT_COLOR if a.category == 0 else TABLE_COLOR)
    segments = []
    for p in pairs:
        if p["probability"] < threshold:
            continue
        try:
            c, t = boxes[p["circuit_id"]], boxes[p["table_id"]]
        except KeyError as e:
            raise UserError(f"image {drawing.id}: prediction names unknown annotation {e}") from None
        (x0, y0), (x1, y1) = c.bbox.center, t.bbox.center
        line(img, y0, x0, y1, x1, LINK_COLOR)
        segments.append({"circuit_id": c.id, "table_id": t.id, "from": [x0, y0], "to": [x1, y1],
                         "probability": p["probability"]})
    return img, segments


def cmd_render(args, cfg: dict) -> int:
    threshold = float(cfg.pop("threshold", args.threshold))
    _reject_unknown(cfg, "render")
    dataset = _existing_dataset(args.data, "render")
    try:
        preds = json.loads(Path(args.predictions).read_text())
    except FileNotFoundError:
        raise UserError(f"predictions file not found: {args.predictions}") from None
    except json.JSONDecodeError as e:
        raise UserError(f"predictions file is not valid JSON: {e}") from None
    try:
        by_image = {int(rec["image_id"]): rec["pairs"] for rec in preds}
    except (TypeError, KeyError, ValueError):
        raise UserError("predictions must be a list of {image_id, pairs}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for d in dataset:
        img, segments = render_drawing(d, by_image.get(d.id, []), threshold)
        write_ppm(out / f"{d.id:06d}.ppm", img)
        (out / f"{d.id:06d}.json").write_text(
            json.dumps({"image_id": d.id, "threshold": threshold, "segments": segments}, indent=1) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vired", description="Circuit-table relation detection toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        p.set_defaults(fn=fn)
        return p

    p = command("gen-data", cmd_gen_data, "generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--seed", type=int)
    p.add_argument("--kind", choices=["relation", "documents"], default="relation")
    p.add_argument("--split", type=float, help="write train/ and valid/ with this train fraction")

    for name, fn, help_ in (("pretrain", cmd_pretrain, "masked-region classification pretraining"),
                            ("finetune", cmd_finetune, "relation finetuning")):
        p = command(name, fn, help_)
        p.add_argument("--train", dest="train_data")
        p.add_argument("--valid", dest="valid_data")
        p.add_argument("--out", help="checkpoint directory (also receives log.jsonl)")
        p.add_argument("--resume", help="last.ckpt to resume from")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        if name == "finetune":
            p.add_argument("--init", help="pretraining or relation checkpoint to start from")

    p = command("eval", cmd_eval, "print relation metrics as one JSON line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    p = command("predict", cmd_predict, "write per-drawing relation probabilities as JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = command("flops", cmd_flops, "write the FLOPs sweep over N=1..n_max as CSV")
    p.add_argument("--preset", default="paper")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--image-size", type=int)
    p.add_argument("--norm-cost", type=int, default=flops_mod.NORM_COST)
    p.add_argument("--out")

    p = command("render", cmd_render, "draw boxes and predicted links as PPM overlays")
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USER
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        requested_threads()
        cfg = load_config(args.config, args.set)
        return args.fn(args, cfg)
    except (ShapeError, NonFiniteError, TrainingError, AssertionError) as e:
        print(f"vired {args.command}: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (UserError, ConfigError, ManifestError, CheckpointFormatError, ValueError, TypeError,
            FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as e:
        print(f"vired {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USER
    except Exception as e:  # anything else is a bug, not a user mistake
        logging.getLogger(__name__).exception("unexpected failure")
        print(f"vired {args.command}: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

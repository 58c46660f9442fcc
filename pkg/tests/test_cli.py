import json
import subprocess
import sys

import numpy as np
import pytest

from vired.cli import CIRCUIT_COLOR, LINK_COLOR, TABLE_COLOR, render_drawing, run
from vired.data import read_ppm

SMALL_DATA = ["--set", "canvas=64", "--set", "content=56", "--set", "circuits=[2,3]", "--set", "tables=[1,6]"]
TINY_MODEL = [
    "--set", "model.dim=16", "--set", "model.image_size=56", "--set", "model.mask_size=16",
    "--set", "model.vision_layers=1", "--set", "model.decoder_layers=1", "--set", "base_lr=0.001",
]


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(["gen-data", "--out", str(root / "data"), "--n", "16", "--seed", "7", "--split", "0.75",
                *SMALL_DATA]) == 0
    assert run(["finetune", "--train", str(root / "data/train"), "--valid", str(root / "data/valid"),
                "--out", str(root / "run"), "--epochs", "2", *TINY_MODEL]) == 0
    return root


def test_gen_data_is_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        assert run(["gen-data", "--out", str(tmp_path / name), "--n", "5", "--seed", "7", *SMALL_DATA]) == 0
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a == b
    assert "manifest.json" in a and len(a) == 6


def test_gen_data_documents(tmp_path):
    assert run(["gen-data", "--out", str(tmp_path), "--n", "3", "--kind", "documents"]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["categories"]) == 5
    assert manifest["relations"] == []


def test_finetune_writes_checkpoints_and_log(workspace):
    run_dir = workspace / "run"
    assert (run_dir / "best.ckpt").is_file() and (run_dir / "last.ckpt").is_file()
    lines = (run_dir / "log.jsonl").read_text().splitlines()
    assert len(lines) == 4


def test_eval_prints_one_json_line(workspace, capsys):
    capsys.readouterr()
    assert run(["eval", "--checkpoint", str(workspace / "run/best.ckpt"), "--data", str(workspace / "data/valid")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 1
    record = json.loads(out[0])
    assert list(record) == ["map", "precision", "recall", "accuracy"]
    assert all(0.0 <= v <= 1.0 for v in record.values())


def test_predict_and_render(workspace):
    preds_path = workspace / "preds.json"
    assert run(["predict", "--checkpoint", str(workspace / "run/best.ckpt"),
                "--data", str(workspace / "data/valid"), "--out", str(preds_path)]) == 0
    preds = json.loads(preds_path.read_text())
    for rec in preds:
        assert set(rec) == {"image_id", "pairs"}
        for p in rec["pairs"]:
            assert set(p) == {"circuit_id", "table_id", "probability"}
            assert 0.0 <= p["probability"] <= 1.0

    # pick a threshold that keeps some links and drops others
    probs = sorted(p["probability"] for rec in preds for p in rec["pairs"])
    threshold = probs[len(probs) // 2]
    out = workspace / "render"
    assert run(["render", "--data", str(workspace / "data/valid"), "--predictions", str(preds_path),
                "--out", str(out), "--threshold", repr(threshold)]) == 0
    for rec in preds:
        meta = json.loads((out / f"{rec['image_id']:06d}.json").read_text())
        expected = sum(p["probability"] >= threshold for p in rec["pairs"])
        assert len(meta["segments"]) == expected
        assert read_ppm(out / f"{rec['image_id']:06d}.ppm").shape == (64, 64, 3)


def test_render_draws_segment_between_centres():
    from vired.data import Annotation, BoundingBox, Drawing

    img = np.full((40, 40, 3), 255, np.uint8)
    d = Drawing(1, img, [Annotation(1, BoundingBox(2, 2, 8, 6), 0), Annotation(2, BoundingBox(2, 28, 8, 6), 1),
                         Annotation(3, BoundingBox(28, 28, 8, 6), 1)])
    pairs = [{"circuit_id": 1, "table_id": 2, "probability": 0.9},
             {"circuit_id": 1, "table_id": 3, "probability": 0.2}]
    out, segments = render_drawing(d, pairs, 0.5)
    assert [(s["circuit_id"], s["table_id"]) for s in segments] == [(1, 2)]
    assert segments[0]["from"] == [6.0, 5.0] and segments[0]["to"] == [6.0, 31.0]
    assert tuple(out[18, 6]) == LINK_COLOR
    assert tuple(out[2, 5]) == CIRCUIT_COLOR
    assert tuple(out[28, 30]) == TABLE_COLOR
    assert not (out == np.array(LINK_COLOR)).all(axis=2)[18, 20:].any()


def test_flops_csv(tmp_path, capsys):
    capsys.readouterr()
    assert run(["flops", "--n-max", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,total,vision,object,decoder,head"
    assert len(lines) == 4
    assert run(["flops", "--preset", "desk", "--out", str(tmp_path / "f.csv")]) == 0
    assert len((tmp_path / "f.csv").read_text().splitlines()) == 21


def test_pretrain_then_finetune_from_it(tmp_path):
    assert run(["gen-data", "--out", str(tmp_path / "docs"), "--n", "8", "--kind", "documents", "--split", "0.75",
                "--set", "canvas=64", "--set", "content=56", "--set", "regions=[3,4]"]) == 0
    assert run(["pretrain", "--train", str(tmp_path / "docs/train"), "--valid", str(tmp_path / "docs/valid"),
                "--out", str(tmp_path / "pre"), "--epochs", "1", *TINY_MODEL]) == 0
    assert run(["gen-data", "--out", str(tmp_path / "rel"), "--n", "8", "--split", "0.75", *SMALL_DATA]) == 0
    assert run(["finetune", "--train", str(tmp_path / "rel/train"), "--valid", str(tmp_path / "rel/valid"),
                "--init", str(tmp_path / "pre/best.ckpt"), "--out", str(tmp_path / "ft"), "--epochs", "1",
                *TINY_MODEL]) == 0
    assert (tmp_path / "ft/best.ckpt").is_file()


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"canvas": 64, "content": 56, "circuits": [2, 3], "tables": [1, 6]}))
    assert run(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "a"), "--n", "2", "--seed", "1"]) == 0
    assert run(["gen-data", "--out", str(tmp_path / "b"), "--n", "2", "--seed", "1", *SMALL_DATA]) == 0
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


@pytest.mark.parametrize("argv", [
    ["eval", "--checkpoint", "missing.ckpt", "--data", "missing"],
    ["gen-data", "--out", "x", "--set", "bogus=1"],
    ["gen-data", "--out", "x", "--set", "novalue"],
    ["gen-data", "--out", "x", "--config", "missing.json"],
    ["gen-data", "--out", "x", "--set", "circuits=[5,1]"],
    ["flops", "--preset", "huge"],
    ["frobnicate"],
    [],
    ["eval", "--data", "x"],
])
def test_user_errors_exit_2(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 2


def test_corrupt_checkpoint_is_a_user_error(tmp_path, workspace):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"junk")
    assert run(["eval", "--checkpoint", str(bad), "--data", str(workspace / "data/valid")]) == 2


def test_pretrain_checkpoint_cannot_be_evaluated(tmp_path, workspace):
    from vired import ViRED, preset
    from vired.model import to_checkpoint

    ckpt = tmp_path / "pre.ckpt"
    to_checkpoint(ViRED(preset("desk", dim=16, image_size=56, mask_size=16), mode="pretrain")).save(ckpt)
    assert run(["eval", "--checkpoint", str(ckpt), "--data", str(workspace / "data/valid")]) == 2


def test_internal_failure_exits_3(workspace, monkeypatch):
    import vired.cli as cli

    def broken(*args, **kw):
        raise AssertionError("pair count invariant violated")

    monkeypatch.setattr(cli, "evaluate", broken)
    assert run(["eval", "--checkpoint", str(workspace / "run/best.ckpt"), "--data", str(workspace / "data/valid")]) == 3


def test_help_exits_0():
    assert run(["--help"]) == 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vired.cli", "flops", "--n-max", "2"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.startswith("n,total")
    bad = subprocess.run([sys.executable, "-m", "vired.cli", "eval"], capture_output=True, text=True, cwd=tmp_path)
    assert bad.returncode == 2


def test_bad_thread_setting_is_a_user_error(monkeypatch):
    monkeypatch.setenv("VIRED_THREADS", "zero")
    assert run(["flops", "--n-max", "1"]) == 2

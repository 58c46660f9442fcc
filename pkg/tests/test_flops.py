import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vired.config import preset
from vired.flops import (
    NORM_COST, FlopsBreakdown, attention_flops, conv_flops, estimate_flops, head_flops_each, linear_flops,
    object_flops_each, split_objects, sweep, sweep_csv,
)
from vired.model import RELATION, Sample, ViRED, collate
from vired.object_encoder import BoundingBox
from vired.tensorcore import no_grad, ops

PAPER = preset("paper")
DESK = preset("desk")


def test_linear_one_vector():
    assert linear_flops(1, 4, 3) == 24


def test_small_kernels_by_hand():
    # 3x3 kernel, one channel in and out, 2x2 output: 9 multiply-adds per output pixel
    assert conv_flops(1, 1, 3, 2, 2) == 2 * 9 * 4
    # one query, one key, width 2: four 2x2 projections (32), q.k (4), softmax (5), weighted value (4)
    assert attention_flops(1, 1, 2, 1) == 32 + 4 + 5 + 4


def test_vision_term_is_constant_in_n():
    counts = {b.vision for _, b in sweep(PAPER, 20)}
    assert len(counts) == 1


def test_paper_preset_growth_is_small():
    rows = dict(sweep(PAPER, 20))
    assert rows[20].total / rows[1].total < 1.25


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15))
def test_term_scaling(nc, nt):
    b = estimate_flops(DESK, nc, nt)
    assert b.head == nc * nt * head_flops_each(DESK)
    assert b.object == (nc + nt) * object_flops_each(DESK)
    assert b.total == b.vision + b.object + b.decoder + b.head
    assert min(b.vision, b.object, b.decoder, b.head) >= 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15))
def test_monotone_in_both_counts(nc, nt):
    base = estimate_flops(PAPER, nc, nt).total
    assert estimate_flops(PAPER, nc + 1, nt).total >= base
    assert estimate_flops(PAPER, nc, nt + 1).total >= base


def test_counts_stay_exact_integers():
    b = estimate_flops(PAPER, 10, 10)
    assert all(isinstance(v, int) for v in (b.vision, b.object, b.decoder, b.head, b.total))
    assert b.total > 2 ** 31


def test_split_objects():
    assert [split_objects(n) for n in (1, 2, 5)] == [(1, 0), (1, 1), (3, 2)]


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        estimate_flops(DESK, -1, 2)


def test_csv_layout():
    rows = list(csv.reader(io.StringIO(sweep_csv(DESK, 5))))
    assert rows[0] == ["n", "total", "vision", "object", "decoder", "head"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3, 4, 5]
    for r in rows[1:]:
        total, *parts = map(int, r[1:])
        assert total == sum(parts)


def test_norm_cost_is_configurable():
    a = estimate_flops(DESK, 2, 2, norm_cost=NORM_COST)
    b = estimate_flops(DESK, 2, 2, norm_cost=0)
    assert b.total < a.total
    assert a.object == b.object


class _Counter:
    """Tallies FLOPs from the kernels actually executed, with the same counting conventions."""

    def __init__(self, monkeypatch):
        self.total = 0
        for name in ("matmul", "linear", "conv2d", "softmax", "layer_norm"):
            monkeypatch.setattr(ops, name, self._wrap(name, getattr(ops, name)))

    def _wrap(self, name, fn):
        def counted(*args, **kw):
            out = fn(*args, **kw)
            if name == "matmul":
                self.total += 2 * math.prod(out.shape) * args[0].shape[-1]
            elif name == "linear":
                x, w = args[0], args[1]
                self.total += 2 * math.prod(x.shape[:-1]) * w.shape[0] * w.shape[1]
            elif name == "conv2d":
                k = args[1].shape
                self.total += 2 * math.prod(out.shape) * k[1] * k[2] * k[3]
            else:
                self.total += NORM_COST * math.prod(out.shape)
            return out
        return counted


@pytest.mark.parametrize("nc, nt", [(1, 0), (1, 1), (2, 3), (4, 4)])
def test_matches_executed_forward_pass(monkeypatch, nc, nt):
    cfg = preset("desk", dim=16, image_size=56, mask_size=16)
    model = ViRED(cfg, seed=0, mode=RELATION)
    model.eval()
    rng = np.random.default_rng(nc * 10 + nt)
    boxes = [BoundingBox(*rng.uniform(0, 20, 2), *rng.uniform(4, 20, 2)) for _ in range(nc + nt)]
    sample = Sample(rng.integers(0, 256, (56, 56, 3), dtype=np.uint8), boxes, [0] * nc + [1] * nt,
                    ann_ids=list(range(nc + nt)))
    batch = collate([sample], cfg)
    counter = _Counter(monkeypatch)
    with no_grad():
        logits = model.relation_logits(batch)
        if logits.shape[0]:
            ops.softmax(logits, axis=-1)
    assert counter.total == estimate_flops(cfg, nc, nt).total


def test_breakdown_row():
    b = FlopsBreakdown(1, 2, 3, 4)
    assert b.as_row(7) == [7, 10, 1, 2, 3, 4]

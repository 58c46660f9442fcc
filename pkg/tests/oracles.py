"""Brute-force reference computations shared by the metric and acceptance tests."""

from __future__ import annotations

import numpy as np


def brute_force_ap(scores, labels) -> float:
    """Sweep every distinct score as a threshold; sum precision times the recall gained."""
    scores, labels = np.asarray(scores, float), np.asarray(labels, bool)
    n_pos = labels.sum()
    if n_pos == 0:
        return 1.0
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(scores.tolist()), reverse=True):
        kept = scores >= t
        tp = (kept & labels).sum()
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / kept.sum())
        prev_recall = recall
    return ap


def brute_force_map(scores, labels) -> float:
    scores, labels = np.asarray(scores, float), np.asarray(labels, bool)
    return (brute_force_ap(scores, labels) + brute_force_ap(1.0 - scores, ~labels)) / 2.0


def brute_force_pairs(types) -> list[tuple[int, int]]:
    """Filter the full ordered grid of index pairs down to circuit -> table."""
    n = len(types)
    return [(i, j) for i in range(n) for j in range(n) if types[i] == 0 and types[j] == 1]

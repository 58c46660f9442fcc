"""Relation metrics over pooled candidate pairs.

Scores are has-relation probabilities. AP is the uninterpolated all-points
variant; mAP averages AP over the has-relation and no-relation classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ScoredPrediction:
    score: float
    label: bool

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def _arrays(preds) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(preds, tuple) and len(preds) == 2 and not isinstance(preds[0], ScoredPrediction):
        scores, labels = preds
        return np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=bool)
    scores = np.array([p.score for p in preds], dtype=np.float64)
    labels = np.array([p.label for p in preds], dtype=bool)
    return scores, labels


def precision_recall(preds: Sequence[ScoredPrediction], threshold: float = 0.5) -> tuple[float, float]:
    """Has-relation precision and recall for decisions ``score >= threshold``.

    Precision is 1 when nothing is predicted positive; recall is 1 when there
    are no positive labels.
    """
    scores, labels = _arrays(preds)
    decided = scores >= threshold
    tp = int(np.sum(decided & labels))
    n_pred = int(decided.sum())
    n_pos = int(labels.sum())
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_pos if n_pos else 1.0
    return precision, recall


def average_precision(preds: Sequence[ScoredPrediction], return_flag: bool = False):
    """Mean of the precision at each positive hit, ranking by descending score.

    Ties keep input order (stable sort). With no positive labels the result is
    1.0 and, if requested, the returned flag is True.
    """
    scores, labels = _arrays(preds)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return (1.0, True) if return_flag else 1.0
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.flatnonzero(hits) + 1
    ap = float(np.mean(np.arange(1, n_pos + 1) / ranks))
    return (ap, False) if return_flag else ap


def mean_ap(preds: Sequence[ScoredPrediction]) -> float:
    scores, labels = _arrays(preds)
    ap_pos = average_precision((scores, labels))
    ap_neg = average_precision((1.0 - scores, ~labels))
    return (ap_pos + ap_neg) / 2.0


def accuracy(preds: Sequence[ScoredPrediction], threshold: float = 0.5) -> float:
    scores, labels = _arrays(preds)
    if scores.size == 0:
        return 1.0
    return float(np.mean((scores >= threshold) == labels))


def summarize(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """The flat metrics record: ``map``, ``precision``, ``recall``, ``accuracy``."""
    preds = (np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=bool))
    p, r = precision_recall(preds, threshold)
    return {"map": mean_ap(preds), "precision": p, "recall": r, "accuracy": accuracy(preds, threshold)}

"""Confidence-threshold baseline: no learning beyond picking a percentile.

Candidate thresholds are the 1st..99th percentiles of the training-set
confidences; a component is flagged as an error when its confidence is at
or below the threshold. The candidate with the best validation micro-F1
wins, ties resolved toward the lower (more conservative) threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from confocr.metrics import F1Score, micro_f1


@dataclass(frozen=True)
class BaselineModel:
    threshold: float

    def predict(self, confidences: Sequence[float]) -> list[bool]:
        return [c <= self.threshold for c in confidences]

    def evaluate(self, confidences: Sequence[float], labels: Sequence[bool]) -> F1Score:
        return micro_f1(self.predict(confidences), labels)


def percentile_candidates(train_confidences: Sequence[float]) -> list[float]:
    """Distinct 1st..99th percentiles of the training confidences, ascending."""
    if len(train_confidences) == 0:
        raise ValueError("cannot take percentiles of an empty confidence list")
    grid = np.percentile(np.asarray(train_confidences, dtype=np.float64), np.arange(1, 100))
    return [float(v) for v in np.unique(grid)]


def best_threshold(
    candidates: Sequence[float],
    val_confidences: Sequence[float],
    val_labels: Sequence[bool],
) -> float:
    """Candidate maximizing validation micro-F1; ties go to the lower value."""
    if len(val_confidences) == 0:
        raise ValueError("validation set must be nonempty")
    winner = None
    best_f1 = -1.0
    for candidate in sorted(candidates):
        score = BaselineModel(candidate).evaluate(val_confidences, val_labels)
        if score.f1 > best_f1:
            best_f1 = score.f1
            winner = candidate
    return winner


def fit_baseline(
    train_confidences: Sequence[float],
    val_confidences: Sequence[float],
    val_labels: Sequence[bool],
) -> BaselineModel:
    candidates = percentile_candidates(train_confidences)
    return BaselineModel(threshold=best_threshold(candidates, val_confidences, val_labels))

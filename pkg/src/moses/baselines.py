"""The two score-only comparison strategies: a single Youden-J threshold and
nearest-score majority voting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import TooFewReferences

log = logging.getLogger(__name__)

HUMAN_BELOW = "human_below"
HUMAN_ABOVE = "human_above"


@dataclass(frozen=True)
class StaticThreshold:
    t: float
    orientation: str       # which side of t is called human
    j_statistic: float
    degenerate: bool = False

    def predict(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        if self.orientation == HUMAN_BELOW:
            return (scores < self.t).astype(int)
        return (scores > self.t).astype(int)


def _j_statistic(pred: np.ndarray, labels: np.ndarray) -> float:
    pos = labels == 1
    tpr = float(pred[pos].mean()) if pos.any() else 0.0
    fpr = float(pred[~pos].mean()) if (~pos).any() else 0.0
    return tpr - fpr


def fit_static(scores, labels) -> StaticThreshold:
    """Sweep every score gap (and both infinities) for the threshold and
    orientation maximizing TPR - FPR. Ties prefer the smallest threshold,
    then the human-below orientation."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if len(set(labels.tolist())) < 2:
        raise ValueError("both classes must be present")

    distinct = np.unique(scores)
    if distinct.size == 1:
        return StaticThreshold(
            t=float(distinct[0]), orientation=HUMAN_BELOW, j_statistic=0.0,
            degenerate=True,
        )

    candidates = np.concatenate(
        [[-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]]
    )
    best = None
    for t in candidates:
        for orientation in (HUMAN_BELOW, HUMAN_ABOVE):
            pred = (scores < t) if orientation == HUMAN_BELOW else (scores > t)
            j = _j_statistic(pred.astype(int), labels)
            key = (-j, t, 0 if orientation == HUMAN_BELOW else 1)
            if best is None or key < best[0]:
                best = (key, StaticThreshold(float(t), orientation, j))
    return best[1]


def nearest_vote(ref_scores, ref_labels, query_score: float, k: int = 100) -> int:
    """Majority label among the k references closest in score. Distance ties
    prefer the smaller score, then earlier insertion; an exact vote tie goes
    to human."""
    ref_scores = np.asarray(ref_scores, dtype=float)
    ref_labels = np.asarray(ref_labels, dtype=int)
    if k < 1:
        raise ValueError("k must be >= 1")
    if ref_scores.shape[0] < k:
        raise TooFewReferences(
            f"need at least k={k} references, have {ref_scores.shape[0]}"
        )
    order = sorted(
        range(ref_scores.shape[0]),
        key=lambda i: (abs(ref_scores[i] - query_score), ref_scores[i], i),
    )
    votes = ref_labels[order[:k]]
    ones = int(votes.sum())
    if ones * 2 == k:
        log.debug("nearest_vote tie at k=%d for query %.6g; voting human", k, query_score)
        return 1
    return 1 if ones * 2 > k else 0

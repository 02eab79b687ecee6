"""
Detection Metrics
ROC AUC (Mann–Whitney form) and partial AUC over a low false-positive range
"""

import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import rankdata
from sklearn.metrics import roc_curve

from ..core.errors import MetricError

logger = logging.getLogger(__name__)


def _validate(scores: Sequence[float], labels: Sequence[bool]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    if scores.shape != labels.shape:
        raise MetricError("scores and labels differ in length", scores=scores.size, labels=labels.size)
    if not np.all(np.isfinite(scores)):
        raise MetricError("scores must be finite")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("AUC needs at least one positive and one negative clip",
                          positives=n_pos, negatives=labels.size - n_pos)
    return scores, labels


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """
    Fraction of (positive, negative) pairs ranked correctly, ties counted ½.

    Raises:
        MetricError: Single-class input or length mismatch
    """
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    u_statistic = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


def partial_auc(scores: Sequence[float], labels: Sequence[bool], p: float = 0.1,
                standardized: bool = False) -> float:
    """
    Area under the ROC curve for FPR in [0, p].

    The curve is integrated with the trapezoid rule over its exact step
    points, interpolating at FPR = p.

    Args:
        p: Upper FPR bound, 0 < p ≤ 1
        standardized: Apply the McClish correction (random scorer → 0.5)
            instead of dividing by p (random scorer → p/2)

    Raises:
        MetricError: Single-class input, length mismatch or p out of range
    """
    if not 0.0 < p <= 1.0:
        raise MetricError("pAUC bound must lie in (0, 1]", p=p)
    scores, labels = _validate(scores, labels)
    fpr, tpr, _ = roc_curve(labels, scores, drop_intermediate=False)

    stop = int(np.searchsorted(fpr, p, side="right"))
    x, y = fpr[:stop], tpr[:stop]
    if x[-1] < p:
        # vertical runs at fpr == p are already included; interpolate on the next segment
        y_at_p = np.interp(p, fpr[stop - 1:stop + 1], tpr[stop - 1:stop + 1])
        x, y = np.append(x, p), np.append(y, y_at_p)
    area = float(trapezoid(y, x))

    if standardized:
        min_area = p * p / 2.0
        return 0.5 * (1.0 + (area - min_area) / (p - min_area))
    return area / p

"""
Anomaly Scoring
Test-time ArcFace loss against a clip's own machine class, plus metadata accuracy
"""

import logging
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from ..core.errors import DataError, LabelError
from ..core.tensor import no_grad
from ..data.dataset import ClipSet
from ..dsp.frontend import Waveform
from ..modules.arcface import one_hot, validate_labels
from ..modules.detector import AnomalyDetector

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 32


def _batches(n: int, size: int) -> Iterator[slice]:
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _label_vectors(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape[1] != n_classes:
            raise LabelError("label vectors do not match the class count",
                             width=labels.shape[1], n_classes=n_classes)
        return validate_labels(labels)
    return one_hot(labels, n_classes)


def score_batch(detector: AnomalyDetector, waveforms: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-clip anomaly scores and predicted classes for one batch.

    Args:
        waveforms: n × l clips
        labels: n class indices or n × c one-hot vectors

    Returns:
        (scores, predicted class indices)
    """
    detector.eval()
    with no_grad():
        output = detector(waveforms)
        y = _label_vectors(labels, detector.n_classes)
        scores = detector.head.loss(output.angles, y, reduction="none").data
    return scores.astype(np.float64), np.argmin(output.angles.data, axis=-1)


def score_clips(detector: AnomalyDetector, clips: ClipSet, batch_size: int = DEFAULT_BATCH) -> np.ndarray:
    """Anomaly score of every clip in order; higher means more anomalous"""
    scores = np.zeros(len(clips), dtype=np.float64)
    for part in _batches(len(clips), batch_size):
        scores[part], _ = score_batch(detector, clips.waveforms[part], clips.labels[part])
    if not np.all(np.isfinite(scores)):
        raise DataError("non-finite anomaly score", clips=int(np.sum(~np.isfinite(scores))))
    return scores


def anomaly_score(detector: AnomalyDetector, x: Union[Waveform, np.ndarray],
                  y: Union[int, np.ndarray]) -> float:
    """
    ArcFace loss of one clip against its metadata class, without augmentation.

    Args:
        x: Waveform of the configured clip length
        y: Class index or one-hot label vector

    Raises:
        LabelError: Label outside the vocabulary
    """
    samples = x.samples if isinstance(x, Waveform) else np.asarray(x)
    labels = np.atleast_2d(y) if np.ndim(y) else np.array([y])
    scores, _ = score_batch(detector, samples[None, :], labels)
    return float(scores[0])


def predict_classes(detector: AnomalyDetector, waveforms: np.ndarray,
                    batch_size: int = DEFAULT_BATCH) -> np.ndarray:
    """Class with the smallest angle to each clip's embedding"""
    detector.eval()
    predicted = np.zeros(len(waveforms), dtype=np.int64)
    with no_grad():
        for part in _batches(len(waveforms), batch_size):
            predicted[part] = np.argmin(detector(waveforms[part]).angles.data, axis=-1)
    return predicted


def classification_accuracy(detector: AnomalyDetector, clips: ClipSet,
                            batch_size: int = DEFAULT_BATCH, mask: Optional[np.ndarray] = None) -> float:
    """Metadata (machine type/ID) accuracy on unmixed clips in eval mode"""
    if len(clips) == 0:
        raise DataError("accuracy needs at least one clip")
    predicted = predict_classes(detector, clips.waveforms, batch_size)
    hits = predicted == clips.labels
    if mask is not None:
        hits = hits[mask]
    return float(np.mean(hits))

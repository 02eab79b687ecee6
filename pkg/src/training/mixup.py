"""
Mixup
Waveform-level mixup with one Beta(α, α) coefficient and one pairing permutation per batch
"""

from dataclasses import dataclass

import numpy as np

from ..core.errors import DataError, NumericError


@dataclass(frozen=True)
class MixupDraw:
    lam: float
    permutation: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise NumericError("mixup coefficient outside [0, 1]", lam=self.lam)
        n = len(self.permutation)
        if not np.array_equal(np.sort(self.permutation), np.arange(n)):
            raise DataError("pairing is not a permutation of the batch", size=n)


@dataclass
class MixedBatch:
    waveforms: np.ndarray
    y_dominant: np.ndarray
    y_mixed: np.ndarray
    lam: float


def draw_mixup(rng: np.random.Generator, batch_size: int, alpha: float) -> MixupDraw:
    """Consumes one Beta draw, then one permutation, from ``rng``"""
    lam = float(rng.beta(alpha, alpha))
    return MixupDraw(lam=lam, permutation=rng.permutation(batch_size))


def mixup_batch(waveforms: np.ndarray, labels: np.ndarray, draw: MixupDraw) -> MixedBatch:
    """
    x^{ij} = λ·x^i + (1 − λ)·x^j and y^{ij} = λ·y^i + (1 − λ)·y^j with j = perm(i).

    Args:
        waveforms: n × l raw signals
        labels: n × c label vectors
        draw: Coefficient and pairing for this batch

    Raises:
        DataError: Empty batch or pairing of the wrong size
    """
    n = len(waveforms)
    if n == 0:
        raise DataError("cannot mix an empty batch")
    if len(draw.permutation) != n or len(labels) != n:
        raise DataError("batch, labels and pairing differ in size",
                        batch=n, labels=len(labels), pairing=len(draw.permutation))
    lam, perm = draw.lam, draw.permutation
    mixed = lam * waveforms + (1.0 - lam) * waveforms[perm]
    y_mixed = lam * labels + (1.0 - lam) * labels[perm]
    return MixedBatch(waveforms=mixed, y_dominant=labels, y_mixed=y_mixed, lam=lam)

"""
ArcFace Head
Angular classification head, margin-penalised softmax loss and the mixup-combined objective
"""

import logging
import math
from typing import Sequence, Union

import numpy as np

from ..core import functional as F
from ..core.errors import ConfigError, LabelError, NumericError, ShapeError
from ..core.layers import xavier_uniform
from ..core.module_interface import BaseModule, Parameter
from ..core.tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)

LabelArray = Union[np.ndarray, Sequence[Sequence[float]]]


def one_hot(indices: Union[int, Sequence[int], np.ndarray], n_classes: int) -> np.ndarray:
    """Rows of one-hot label vectors"""
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if indices.size and (indices.min() < 0 or indices.max() >= n_classes):
        raise LabelError("label index outside the vocabulary", n_classes=n_classes)
    labels = np.zeros((indices.size, n_classes), dtype=get_default_dtype())
    labels[np.arange(indices.size), indices] = 1.0
    return labels


def validate_labels(y: np.ndarray) -> np.ndarray:
    """Label vectors must be non-negative and sum to one"""
    y = np.atleast_2d(np.asarray(y, dtype=get_default_dtype()))
    if np.any(y < 0) or not np.allclose(y.sum(axis=-1), 1.0, atol=1e-6):
        raise LabelError("label vectors must be non-negative and sum to 1")
    return y


def arcface_angles(embedding: Tensor, class_weights: Tensor) -> Tensor:
    """
    θ_i = arccos(ŵ_i · ĥ) with both operands unit-normalised.

    Args:
        embedding: N × h (or h) embeddings, normalised here
        class_weights: c × h class weight rows, renormalised here

    Returns:
        N × c angles in (0, π)
    """
    embedding = F.as_tensor(embedding)
    if embedding.ndim == 1:
        embedding = F.reshape(embedding, (1, embedding.shape[0]))
    if embedding.shape[-1] != class_weights.shape[-1]:
        raise ShapeError("embedding and class weights differ in width",
                         embedding=embedding.shape, weights=class_weights.shape)
    h_hat = F.l2_normalize(embedding, axis=-1)
    w_hat = F.l2_normalize(class_weights, axis=-1)
    return F.safe_arccos(F.matmul(h_hat, F.transpose(w_hat)))


def arcface_loss(theta: Tensor, y: LabelArray, scale: float, margin: float, reduction: str = "mean") -> Tensor:
    """
    Margin-penalised softmax cross-entropy on angles.

    z_i = s·cos(θ_i + m·y_i);  loss = −Σ_i y_i·log softmax(z)_i

    Args:
        theta: N × c angles
        y: N × c label vectors (one-hot or mixed)
        scale: s > 0
        margin: m, applied in proportion to each label weight
        reduction: "mean" over the batch, "sum", or "none" for per-clip losses
    """
    theta = F.as_tensor(theta)
    if theta.ndim == 1:
        theta = F.reshape(theta, (1, theta.shape[0]))
    y = np.asarray(y, dtype=theta.dtype).reshape(theta.shape)
    logits = F.mul(F.cos(F.add(theta, margin * y)), scale)
    per_clip = F.mul(F.sum(F.mul(F.log_softmax(logits, axis=-1), y), axis=-1), -1.0)
    if reduction == "none":
        return per_clip
    if reduction == "sum":
        return F.sum(per_clip)
    return F.mean(per_clip)


def combined_loss(theta: Tensor, y_dominant: LabelArray, y_mixed: LabelArray, lam: float,
                  scale: float, margin: float) -> Tensor:
    """
    λ·L(θ, y_dominant) + (1 − λ)·L(θ, y_mixed)

    Raises:
        NumericError: If λ lies outside [0, 1]
    """
    if not 0.0 <= lam <= 1.0:
        raise NumericError("mixup coefficient outside [0, 1]", lam=lam)
    dominant = arcface_loss(theta, y_dominant, scale, margin)
    mixed = arcface_loss(theta, y_mixed, scale, margin)
    return F.add(F.mul(dominant, lam), F.mul(mixed, 1.0 - lam))


class ArcFaceHead(BaseModule):
    """Class weight rows w_i with scale s and margin m"""

    def __init__(self, n_classes: int, embedding_dim: int, rng: np.random.Generator,
                 scale: float = 40.0, margin: float = 0.7):
        super().__init__()
        if scale <= 0:
            raise ConfigError("scale must be positive", key="scale")
        if not 0 <= margin < math.pi / 2:
            raise ConfigError("margin must lie in [0, pi/2)", key="margin")
        self.scale, self.margin = scale, margin
        weights = xavier_uniform(rng, (n_classes, embedding_dim), embedding_dim, n_classes)
        weights /= np.linalg.norm(weights, axis=1, keepdims=True)
        self.weight = Parameter(weights)

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    def forward(self, embedding: Tensor) -> Tensor:
        return arcface_angles(embedding, self.weight)

    def loss(self, theta: Tensor, y: LabelArray, reduction: str = "mean") -> Tensor:
        return arcface_loss(theta, y, self.scale, self.margin, reduction=reduction)

    def combined_loss(self, theta: Tensor, y_dominant: LabelArray, y_mixed: LabelArray, lam: float) -> Tensor:
        return combined_loss(theta, y_dominant, y_mixed, lam, self.scale, self.margin)

"""
Tests for the ArcFace angles, margin loss and mixup-combined objective
"""

import math

import numpy as np
import pytest
from scipy import special

from src.core.errors import ConfigError, LabelError, NumericError, ShapeError
from src.core.tensor import Tensor, precision
from src.modules.arcface import (
    ArcFaceHead,
    arcface_angles,
    arcface_loss,
    combined_loss,
    one_hot,
    validate_labels,
)


def unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class TestAngles:
    def test_match_normalised_dot_products(self, rng):
        e, w = rng.standard_normal((4, 6)), rng.standard_normal((3, 6))
        theta = arcface_angles(Tensor(e), Tensor(w)).data
        np.testing.assert_allclose(np.cos(theta), unit_rows(e) @ unit_rows(w).T, atol=1e-9)

    def test_scale_invariant(self, rng):
        e, w = rng.standard_normal((2, 5)), rng.standard_normal((3, 5))
        np.testing.assert_allclose(arcface_angles(Tensor(7.0 * e), Tensor(w)).data,
                                   arcface_angles(Tensor(e), Tensor(w)).data, atol=1e-9)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            arcface_angles(Tensor(rng.standard_normal((2, 5))), Tensor(rng.standard_normal((3, 4))))


class TestLoss:
    def test_no_margin_unit_scale_is_cosine_softmax(self, rng):
        with precision(np.float64):
            e, w = rng.standard_normal((6, 8)), rng.standard_normal((4, 8))
            labels = rng.integers(0, 4, size=6)
            loss = arcface_loss(arcface_angles(Tensor(e), Tensor(w)), one_hot(labels, 4), scale=1.0, margin=0.0)
        logits = unit_rows(e) @ unit_rows(w).T
        expected = -special.log_softmax(logits, axis=1)[np.arange(6), labels].mean()
        assert loss.item() == pytest.approx(expected, abs=1e-10)

    def test_margin_never_lowers_the_loss(self, rng):
        with precision(np.float64):
            for _ in range(1000):
                theta = rng.uniform(0.05, math.pi / 2, size=(1, 5))
                y = one_hot(rng.integers(0, 5), 5)
                small, large = np.sort(rng.uniform(0.0, 1.5, size=2))
                low = arcface_loss(Tensor(theta), y, scale=10.0, margin=small).item()
                high = arcface_loss(Tensor(theta), y, scale=10.0, margin=large).item()
                assert high >= low - 1e-12

    def test_loss_increases_with_the_target_angle(self, rng):
        margin = 0.5
        with precision(np.float64):
            for _ in range(50):
                others = rng.uniform(0.3, 2.5, size=3)
                target = np.linspace(0.0, math.pi - margin, 60)
                theta = np.column_stack([target, np.broadcast_to(others, (60, 3))])
                losses = arcface_loss(Tensor(theta), one_hot(np.zeros(60, dtype=int), 4),
                                      scale=10.0, margin=margin, reduction="none").data
                assert np.all(np.diff(losses) > 0)

    def test_per_clip_reduction(self, rng):
        theta = Tensor(rng.uniform(0.1, 3.0, size=(3, 4)))
        y = one_hot([0, 1, 2], 4)
        per_clip = arcface_loss(theta, y, 40.0, 0.7, reduction="none").data
        assert per_clip.shape == (3,)
        assert arcface_loss(theta, y, 40.0, 0.7).item() == pytest.approx(per_clip.mean())
        assert arcface_loss(theta, y, 40.0, 0.7, reduction="sum").item() == pytest.approx(per_clip.sum())

    def test_combined_with_lambda_one_is_dominant_loss(self, rng):
        theta = Tensor(rng.uniform(0.1, 3.0, size=(2, 3)))
        y_dom, y_mix = one_hot([0, 2], 3), np.array([[0.5, 0.0, 0.5], [0.2, 0.8, 0.0]])
        assert combined_loss(theta, y_dom, y_mix, 1.0, 40.0, 0.7).item() == pytest.approx(
            arcface_loss(theta, y_dom, 40.0, 0.7).item())
        mixed = combined_loss(theta, y_dom, y_mix, 0.3, 40.0, 0.7).item()
        expected = 0.3 * arcface_loss(theta, y_dom, 40.0, 0.7).item() + 0.7 * arcface_loss(theta, y_mix, 40.0, 0.7).item()
        assert mixed == pytest.approx(expected, rel=1e-5)

    def test_lambda_outside_unit_interval(self, rng):
        theta = Tensor(rng.uniform(0.1, 3.0, size=(1, 3)))
        with pytest.raises(NumericError):
            combined_loss(theta, one_hot(0, 3), one_hot(0, 3), 1.5, 40.0, 0.7)


class TestLabels:
    def test_one_hot(self):
        np.testing.assert_array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])

    def test_index_outside_vocabulary(self):
        with pytest.raises(LabelError):
            one_hot([3], 3)
        with pytest.raises(LabelError):
            one_hot([-1], 3)

    def test_label_vectors_must_sum_to_one(self):
        validate_labels([[0.25, 0.75]])
        with pytest.raises(LabelError):
            validate_labels([[0.5, 0.6]])
        with pytest.raises(LabelError):
            validate_labels([[1.5, -0.5]])


class TestHead:
    def test_rows_start_unit_norm(self, rng):
        head = ArcFaceHead(5, 8, rng)
        np.testing.assert_allclose(np.linalg.norm(head.weight.data, axis=1), 1.0, rtol=1e-5)
        assert head.n_classes == 5
        assert head.num_parameters() == 40

    @pytest.mark.parametrize("scale,margin", [(0.0, 0.5), (40.0, -0.1), (40.0, math.pi / 2)])
    def test_invalid_hyperparameters(self, rng, scale, margin):
        with pytest.raises(ConfigError):
            ArcFaceHead(3, 4, rng, scale=scale, margin=margin)

"""
Tests for AUC and partial AUC
"""

import numpy as np
import pytest

from src.core.errors import MetricError
from src.evaluation.metrics import partial_auc, roc_auc


def pairwise_auc(scores, labels):
    pos = scores[labels]
    neg = scores[~labels]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


class TestRocAuc:
    @pytest.mark.parametrize("scores,labels,expected", [
        ([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], 1.0),
        ([0.5, 0.1, 0.8, 0.3], [0, 0, 1, 1], 0.75),
        ([0.4, 0.4, 0.4, 0.4], [0, 1, 0, 1], 0.5),
        ([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1], 0.0),
    ])
    def test_small_examples(self, scores, labels, expected):
        assert roc_auc(scores, labels) == pytest.approx(expected)

    def test_matches_pairwise_count(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 200))
            labels = rng.random(n) < 0.4
            labels[0], labels[1] = True, False
            scores = np.round(rng.standard_normal(n), 1)
            assert roc_auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    def test_invariant_to_monotone_transforms(self, rng):
        scores, labels = rng.standard_normal(300), rng.random(300) < 0.5
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base)
        assert roc_auc(3.0 * scores - 7.0, labels) == pytest.approx(base)
        assert partial_auc(np.exp(scores), labels) == pytest.approx(partial_auc(scores, labels))

    @pytest.mark.parametrize("scores,labels", [
        ([0.1, 0.2], [1, 1]),
        ([0.1, 0.2], [0, 0]),
        ([0.1, 0.2, 0.3], [0, 1]),
        ([0.1, np.nan], [0, 1]),
    ])
    def test_degenerate_inputs(self, scores, labels):
        with pytest.raises(MetricError):
            roc_auc(scores, labels)


class TestPartialAuc:
    def test_hand_computed_steps(self):
        scores = np.concatenate([np.arange(10.0), [9.5, 4.5]])
        labels = np.array([False] * 10 + [True, True])
        assert partial_auc(scores, labels, p=0.1) == pytest.approx(0.5)
        assert partial_auc(scores, labels, p=0.15) == pytest.approx(0.5)
        assert partial_auc(scores, labels, p=0.6) == pytest.approx((0.5 * 0.5 + 0.1 * 1.0) / 0.6)

    def test_full_range_equals_auc(self, rng):
        scores, labels = np.round(rng.standard_normal(150), 1), rng.random(150) < 0.3
        assert partial_auc(scores, labels, p=1.0) == pytest.approx(roc_auc(scores, labels), abs=1e-12)

    def test_perfect_detector(self):
        scores, labels = [0.1, 0.2, 0.3, 0.9, 0.95], [0, 0, 0, 1, 1]
        assert partial_auc(scores, labels) == pytest.approx(1.0)
        assert partial_auc(scores, labels, standardized=True) == pytest.approx(1.0)

    def test_random_scorer(self, rng):
        scores, labels = rng.random(10_000), rng.random(10_000) < 0.5
        assert partial_auc(scores, labels, p=0.1) == pytest.approx(0.05, abs=0.01)
        assert partial_auc(scores, labels, p=0.1, standardized=True) == pytest.approx(0.5, abs=0.05)

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
    def test_bound_out_of_range(self, p):
        with pytest.raises(MetricError):
            partial_auc([0.1, 0.9], [0, 1], p=p)

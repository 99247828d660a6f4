"""Fairness gaps, adversary accuracy, and downstream evaluation."""

import math

import numpy as np
import pytest

from decorrlab.data import LabeledDataset
from decorrlab.metrics import (
    adversary_accuracy,
    demographic_parity_gap,
    equalized_odds_gap,
    train_and_eval_downstream,
)
from decorrlab.nn import fit_classifier, forward, mlp
from decorrlab.numerics import RngState, sample_standard_normal


class TestDemographicParity:
    def test_constant_predictions_have_zero_gap(self):
        preds = np.ones(100, dtype=int)
        s = np.array([0, 1] * 50)
        report = demographic_parity_gap(preds, s)
        assert report.max_demp == 0.0
        assert all(v == 0.0 for v in report.demp_gap.values())

    def test_constructed_rates(self):
        # P(pred=1 | s=0) = 0.3, P(pred=1 | s=1) = 0.5 exactly
        preds = np.array([1] * 30 + [0] * 70 + [1] * 50 + [0] * 50)
        s = np.array([0] * 100 + [1] * 100)
        report = demographic_parity_gap(preds, s)
        assert report.demp_gap[1] == pytest.approx(0.2, abs=1e-12)
        assert report.rates[(0, 1)] == pytest.approx(0.3)
        assert report.rates[(1, 1)] == pytest.approx(0.5)

    def test_binary_outcome_symmetry(self):
        rng = RngState(3)
        preds = (rng.uniform(500) < 0.4).astype(int)
        s = (rng.uniform(500) < 0.5).astype(int)
        report = demographic_parity_gap(preds, s)
        assert report.demp_gap[0] == pytest.approx(report.demp_gap[1], abs=1e-12)

    def test_single_group_rejected(self):
        with pytest.raises(ValueError):
            demographic_parity_gap(np.array([0, 1, 0]), np.array([1, 1, 1]))

    def test_small_groups_excluded(self):
        preds = np.array([1, 0, 1, 0, 1, 1])
        s = np.array([0, 0, 1, 1, 1, 2])  # group 2 has one member
        report = demographic_parity_gap(preds, s, min_group_count=2)
        assert all(g != 2 for g, _ in report.rates)

    def test_invariant_to_sample_order_and_group_relabeling(self):
        rng = RngState(9)
        preds = (rng.uniform(400) < 0.3).astype(int)
        s = (rng.uniform(400) < 0.6).astype(int)
        base = demographic_parity_gap(preds, s).max_demp
        perm = rng.permutation(400)
        assert demographic_parity_gap(preds[perm], s[perm]).max_demp == pytest.approx(base)
        assert demographic_parity_gap(preds, 1 - s).max_demp == pytest.approx(base)


class TestEqualizedOdds:
    def test_perfect_predictor_has_zero_gap(self):
        y = np.array([0, 1] * 50)
        s = np.array([0] * 50 + [1] * 50)
        gaps = equalized_odds_gap(y, y, s)
        assert all(v == 0.0 for v in gaps.values())

    def test_predictor_of_y_alone_has_zero_gap(self):
        rng = RngState(4)
        y = (rng.uniform(600) < 0.5).astype(int)
        s = (rng.uniform(600) < 0.5).astype(int)
        preds = 1 - y  # depends on Y only (always wrong, but S-blind)
        gaps = equalized_odds_gap(preds, y, s)
        assert all(v == 0.0 for v in gaps.values())

    def test_hand_computed_confusion_tables(self):
        # outcome 1: group 0 correct 8/10, group 1 correct 5/10 -> gap 0.3
        # outcome 0: group 0 correct 6/10, group 1 correct 6/10 -> gap 0.0
        y = np.array([1] * 20 + [0] * 20)
        s = np.array([0] * 10 + [1] * 10 + [0] * 10 + [1] * 10)
        preds = np.concatenate(
            [
                np.array([1] * 8 + [0] * 2),
                np.array([1] * 5 + [0] * 5),
                np.array([0] * 6 + [1] * 4),
                np.array([0] * 6 + [1] * 4),
            ]
        )
        gaps = equalized_odds_gap(preds, y, s)
        assert gaps[1] == pytest.approx(0.3, abs=1e-12)
        assert gaps[0] == pytest.approx(0.0, abs=1e-12)

    def test_small_cells_excluded_with_warning(self):
        y = np.array([0] * 20 + [1] * 3)
        s = np.array([0, 1] * 10 + [1, 1, 1])
        preds = y.copy()
        with pytest.warns(UserWarning, match="excluded|usable"):
            gaps = equalized_odds_gap(preds, y, s, min_cell_count=5)
        assert 1 not in gaps  # outcome 1 has no usable pair of groups


class TestAdversaryAccuracy:
    def test_leaked_label_is_recovered(self):
        s = (RngState(5).uniform(800) < 0.5).astype(int)
        x = np.stack([s.astype(float), np.zeros(800)], axis=1)
        model = fit_classifier(x, s, (8,), RngState(6), epochs=20)
        assert adversary_accuracy(model, x, s) > 0.999

    def test_pure_noise_matches_majority_rate(self):
        rng = RngState(7)
        s = (rng.uniform(4000) < 0.7).astype(int)
        x = sample_standard_normal(rng.child("x"), 8000).reshape(4000, 2)
        model = fit_classifier(x, s, (8,), RngState(8), epochs=10)
        acc = adversary_accuracy(model, x, s)
        majority = max(s.mean(), 1 - s.mean())
        assert abs(acc - majority) < 3 * math.sqrt(majority * (1 - majority) / 4000) + 0.01

    def test_empty_rejected(self):
        model = mlp((2, 2), RngState(0))
        with pytest.raises(ValueError):
            adversary_accuracy(model, np.zeros((0, 2)), np.zeros(0, dtype=int))


def _correlated_dataset(n, rng, noise=0.0):
    s = (rng.child("s").uniform(n) < 0.5).astype(int)
    z = sample_standard_normal(rng.child("z"), 2 * n).reshape(n, 2)
    x = (2 * s[:, None] - 1) * np.array([1.2, 0.8]) + z
    y = (x @ np.array([1.0, 0.5]) > 0).astype(int)
    return LabeledDataset(x, s, y)


class TestDownstream:
    def test_identity_encoding_matches_plain_classifier(self):
        train = _correlated_dataset(3000, RngState(11))
        test = _correlated_dataset(1000, RngState(12))
        acc, report = train_and_eval_downstream(train, test, RngState(13))
        plain = fit_classifier(train.x, train.y, (16, 8), RngState(13).child("init2"), epochs=30)
        logits, _ = forward(plain, test.x)
        plain_acc = float((logits.argmax(axis=1) == test.y).mean())
        assert abs(acc - plain_acc) < 0.02
        assert report.max_demp > 0.3  # the raw data is strongly S-correlated

    def test_constant_encoding_majority_and_exact_parity(self):
        # the degenerate fair representation: any classifier trained on a
        # constant X_r predicts a constant, so the parity gap is exactly 0
        train = _correlated_dataset(2000, RngState(21))
        test = _correlated_dataset(500, RngState(22))
        const_train = LabeledDataset(np.zeros_like(train.x), train.s, train.y)
        const_test = LabeledDataset(np.zeros_like(test.x), test.s, test.y)
        acc, report = train_and_eval_downstream(const_train, const_test, RngState(23))
        # constant input -> a constant prediction, namely the training
        # majority class; accuracy is that class's test frequency
        majority_class = int(train.y.mean() >= 0.5)
        expected = float((test.y == majority_class).mean())
        assert acc == pytest.approx(expected, abs=1e-12)
        assert report.max_demp == 0.0

    def test_missing_labels_rejected(self):
        ds = LabeledDataset(np.zeros((10, 2)), np.zeros(10, dtype=int))
        with pytest.raises(ValueError):
            train_and_eval_downstream(ds, ds, RngState(1))

"""Training objectives: analytic values, oracle agreement, gradient wiring."""

import math

import numpy as np
import pytest
import torch

from dcpnet import (
    ConfigError,
    DegenerateInputError,
    LossWeights,
    Temperature,
    cluster_consistency_loss,
    hand_prediction_loss,
    instance_contrastive_loss,
    overall_loss,
)

from _oracles import cluster_loss_oracle, hand_loss_oracle, infonce_oracle


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


E1 = [1.0, 0.0, 0.0]
E2 = [0.0, 1.0, 0.0]


class TestHandPrediction:
    def test_parallel_orthogonal_antiparallel(self):
        assert float(hand_prediction_loss(t([E1]), t([E1]))) == pytest.approx(0.0, abs=1e-9)
        assert float(hand_prediction_loss(t([E1]), t([E2]))) == pytest.approx(2.0, abs=1e-9)
        assert float(hand_prediction_loss(t([E1]), t([[-1.0, 0, 0]]))) == pytest.approx(4.0, abs=1e-9)

    def test_batch_is_mean_of_rows(self):
        got = float(hand_prediction_loss(t([E1, E1]), t([E1, E2])))
        assert got == pytest.approx(1.0, abs=1e-9)

    def test_invariant_to_positive_rescaling(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        assert float(hand_prediction_loss(t(3.0 * a), t(0.2 * b))) == pytest.approx(
            float(hand_prediction_loss(t(a), t(b))), abs=1e-12
        )

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
        assert float(hand_prediction_loss(t(a), t(b))) == pytest.approx(
            hand_loss_oracle(a, b), abs=1e-9
        )

    def test_target_receives_no_gradient(self):
        pred = t(np.random.default_rng(3).normal(size=(2, 4))).requires_grad_(True)
        target = t(np.random.default_rng(4).normal(size=(2, 4))).requires_grad_(True)
        hand_prediction_loss(pred, target).backward()
        assert pred.grad is not None and pred.grad.abs().sum() > 0
        assert target.grad is None

    def test_shape_mismatch_and_zero_norm(self):
        with pytest.raises(ValueError):
            hand_prediction_loss(t([E1]), t([[1.0, 0.0]]))
        with pytest.raises(DegenerateInputError):
            hand_prediction_loss(t([[0.0, 0.0, 0.0]]), t([E1]))


class TestInstanceContrast:
    def test_empty_negatives_gives_zero(self):
        loss = instance_contrastive_loss(t([E1, E2]), t([E1, E2]), [t(np.zeros((0, 3)))] * 2)
        assert float(loss) == 0.0

    def test_single_equal_logit_negative_gives_ln2(self):
        loss = instance_contrastive_loss(t([E1]), t([E1]), [t([E1])], Temperature(0.2))
        assert float(loss) == pytest.approx(math.log(2.0), abs=1e-9)

    def test_matches_oracle_with_ragged_banks(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n, d = int(rng.integers(1, 5)), int(rng.integers(2, 9))
            anchors = rng.normal(size=(n, d))
            positives = rng.normal(size=(n, d))
            banks = [rng.normal(size=(int(rng.integers(0, 6)), d)) for _ in range(n)]
            got = float(
                instance_contrastive_loss(
                    t(anchors), t(positives), [t(b) for b in banks], Temperature(0.2)
                )
            )
            assert got == pytest.approx(infonce_oracle(anchors, positives, banks, 0.2), abs=1e-6)

    def test_more_negatives_strictly_increase_the_loss(self):
        rng = np.random.default_rng(6)
        anchors, positives = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
        small = [rng.normal(size=(2, 5)) for _ in range(3)]
        large = [np.vstack([b, rng.normal(size=(1, 5))]) for b in small]
        few = float(instance_contrastive_loss(t(anchors), t(positives), [t(b) for b in small]))
        more = float(instance_contrastive_loss(t(anchors), t(positives), [t(b) for b in large]))
        assert more > few

    def test_bank_receives_no_gradient(self):
        anchors = t([E1]).requires_grad_(True)
        positives = t([E2]).requires_grad_(True)
        negs = t([[0.5, 0.5, 0.0]]).requires_grad_(True)
        instance_contrastive_loss(anchors, positives, [negs]).backward()
        assert anchors.grad is not None
        assert negs.grad is None

    def test_validates_shapes(self):
        with pytest.raises(ValueError):
            instance_contrastive_loss(t(np.zeros((0, 3))), t(np.zeros((0, 3))), [])
        with pytest.raises(ValueError):
            instance_contrastive_loss(t([E1]), t([[1.0, 0.0]]), [t(np.zeros((0, 3)))])
        with pytest.raises(ValueError):
            instance_contrastive_loss(t([E1]), t([E2]), [])
        with pytest.raises(ValueError):
            instance_contrastive_loss(t([E1]), t([E2]), [t([[1.0, 0.0]])])


class TestClusterConsistency:
    def test_orthogonal_one_hot_columns(self):
        c = t([[1.0, 0.0], [0.0, 1.0]])
        got = float(cluster_consistency_loss(c, c, Temperature(1.0)))
        assert got == pytest.approx(math.log(1.0 + math.exp(-1.0)), abs=1e-6)
        assert got == pytest.approx(0.313262, abs=1e-6)

    def test_permuted_one_hot_columns(self):
        c_p = t([[1.0, 0.0], [0.0, 1.0]])
        c_q = t([[0.0, 1.0], [1.0, 0.0]])
        got = float(cluster_consistency_loss(c_p, c_q, Temperature(1.0)))
        assert got == pytest.approx(math.log(1.0 + math.e), abs=1e-6)
        assert got == pytest.approx(1.313262, abs=1e-6)

    def test_identical_columns_give_log_m(self):
        for m in (2, 4, 7):
            c = t(np.full((3, m), 1.0 / m))
            got = float(cluster_consistency_loss(c, c, Temperature(0.5)))
            assert got == pytest.approx(math.log(m), abs=1e-9)

    def test_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n, m = int(rng.integers(2, 17)), int(rng.integers(2, 9))
            c_p = np.exp(rng.normal(size=(n, m)))
            c_q = np.exp(rng.normal(size=(n, m)))
            got = float(cluster_consistency_loss(t(c_p), t(c_q), Temperature(0.2)))
            assert got == pytest.approx(cluster_loss_oracle(c_p, c_q, 0.2), abs=1e-6)

    def test_single_cluster_rejected(self):
        c = t(np.ones((4, 1)))
        with pytest.raises(ValueError):
            cluster_consistency_loss(c, c)

    def test_gradient_reaches_both_matrices(self):
        c_p = t(np.exp(np.random.default_rng(8).normal(size=(3, 4)))).requires_grad_(True)
        c_q = t(np.exp(np.random.default_rng(9).normal(size=(3, 4)))).requires_grad_(True)
        cluster_consistency_loss(c_p, c_q).backward()
        assert c_p.grad is not None and c_q.grad is not None


class TestOverall:
    def test_unit_losses_combine_to_one(self):
        assert float(overall_loss(1.0, 1.0, 1.0, LossWeights())) == pytest.approx(1.0, abs=1e-12)

    def test_weighted_example(self):
        got = overall_loss(0.5, 1.5, 2.5, LossWeights(0.2, 0.6, 0.2))
        assert float(got) == pytest.approx(1.5, abs=1e-12)

    def test_weights_validation(self):
        with pytest.raises(ConfigError):
            LossWeights(0.3, 0.3, 0.3)
        with pytest.raises(ConfigError):
            LossWeights(-0.2, 1.0, 0.2)
        LossWeights(0.0, 1.0, 0.0)  # zeros are fine when the sum stays 1

    def test_temperature_validation(self):
        with pytest.raises(ConfigError):
            Temperature(0.0)
        with pytest.raises(ConfigError):
            Temperature(-1.0)


def test_losses_stay_finite_at_low_temperature():
    rng = np.random.default_rng(10)
    anchors, positives = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
    banks = [rng.normal(size=(12, 8)) for _ in range(6)]
    inst = instance_contrastive_loss(t(anchors), t(positives), [t(b) for b in banks], 0.05)
    clust = cluster_consistency_loss(t(np.exp(anchors)), t(np.exp(positives)), 0.05)
    assert math.isfinite(float(inst)) and math.isfinite(float(clust))

import math

import numpy as np
import pytest

from helpers import fd_grad, max_rel_err, random_prob_map
from ssrl.losses import (LossConfig, beta_ce, ce_loss, combined_loss,
                         consistency_l2, pseudo_label, thresholded_ce)
from ssrl.tensor import Tensor, backward, softmax_channels


def prob(p):
    return Tensor(np.asarray(p, dtype=np.float64))


def one_pixel(values):
    return prob(np.asarray(values, dtype=np.float64).reshape(1, -1, 1, 1))


def one_hot_map(labels, k):
    labels = np.asarray(labels)
    p = np.zeros((labels.shape[0], k) + labels.shape[1:])
    np.put_along_axis(p, labels[:, None], 1.0, axis=1)
    return prob(p)


class TestCrossEntropy:
    def test_perfect_prediction_is_zero(self):
        labels = np.random.default_rng(0).integers(0, 4, size=(2, 3, 3))
        assert ce_loss(one_hot_map(labels, 4), labels).item() == 0.0

    def test_uniform_over_nine_classes(self):
        labels = np.zeros((1, 2, 2), dtype=np.int64)
        p = prob(np.full((1, 9, 2, 2), 1.0 / 9.0))
        assert ce_loss(p, labels).item() == pytest.approx(math.log(9.0), abs=1e-12)

    def test_single_pixel_hand_value(self):
        labels = np.zeros((1, 1, 1), dtype=np.int64)
        loss = ce_loss(one_pixel([0.5, 0.25, 0.25]), labels)
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ce_loss(one_pixel([0.5, 0.5]), np.array([[[2]]]))

    def test_shape_mismatch_rejected(self):
        from ssrl.errors import ShapeError
        with pytest.raises(ShapeError):
            ce_loss(one_pixel([0.5, 0.5]), np.zeros((1, 2, 2), dtype=np.int64))


class TestBetaCrossEntropy:
    def test_perfect_prediction_is_zero(self):
        labels = np.random.default_rng(1).integers(0, 3, size=(1, 2, 2))
        assert beta_ce(one_hot_map(labels, 3), labels, 0.7).item() == pytest.approx(0.0, abs=1e-12)

    def test_two_class_hand_value(self):
        # 2*(1-0.5) + (0.25+0.25) - 1 = 0.5
        labels = np.zeros((1, 1, 1), dtype=np.int64)
        loss = beta_ce(one_pixel([0.5, 0.5]), labels, beta=1.0)
        assert loss.item() == pytest.approx(0.5, abs=1e-12)

    def test_small_beta_recovers_cross_entropy(self):
        rng = np.random.default_rng(2)
        p = prob(random_prob_map(rng, (4, 9, 5, 5)))
        labels = rng.integers(0, 9, size=(4, 5, 5))
        diff = abs(beta_ce(p, labels, 1e-6).item() - ce_loss(p, labels).item())
        assert diff < 1e-4

    def test_nonpositive_beta_rejected(self):
        labels = np.zeros((1, 1, 1), dtype=np.int64)
        with pytest.raises(ValueError):
            beta_ce(one_pixel([0.5, 0.5]), labels, 0.0)

    def test_bounded_influence_at_vanishing_probability(self):
        # at p(true) = 1e-6 the CE gradient magnitude is ~1e6 while the
        # beta=1 gradient stays O(1)
        k = 9
        values = np.full(k, (1.0 - 1e-6) / (k - 1))
        values[0] = 1e-6
        labels = np.zeros((1, 1, 1), dtype=np.int64)

        def true_class_grad(loss_fn):
            p = Tensor(values.reshape(1, k, 1, 1).copy(), track_grad=True)
            backward(loss_fn(p))
            return abs(p.grad[0, 0, 0, 0])

        g_ce = true_class_grad(lambda p: ce_loss(p, labels))
        g_bce = true_class_grad(lambda p: beta_ce(p, labels, 1.0))
        assert g_ce == pytest.approx(1e6, rel=1e-3)
        assert g_bce < g_ce


class TestPseudoLabel:
    def test_one_hot(self):
        labels = np.array([[[2]]])
        pl, conf = pseudo_label(one_hot_map(labels, 4))
        assert pl[0, 0, 0] == 2 and conf[0, 0, 0] == 1.0

    def test_uniform_ties_break_low(self):
        pl, conf = pseudo_label(prob(np.full((1, 9, 2, 2), 1.0 / 9.0)))
        assert np.all(pl == 0)
        assert np.allclose(conf, 1.0 / 9.0)

    def test_hand_case(self):
        pl, conf = pseudo_label(one_pixel([0.2, 0.7, 0.1]))
        assert pl[0, 0, 0] == 1 and conf[0, 0, 0] == pytest.approx(0.7)

    def test_detached_from_graph(self):
        p = Tensor(random_prob_map(np.random.default_rng(3), (1, 4, 2, 2)),
                   track_grad=True)
        pl, conf = pseudo_label(p)
        assert isinstance(pl, np.ndarray) and isinstance(conf, np.ndarray)


class TestThresholdedCE:
    def test_tau_one_is_empty(self):
        rng = np.random.default_rng(4)
        p = prob(random_prob_map(rng, (2, 9, 3, 3)))
        pseudo = rng.integers(0, 9, size=(2, 3, 3))
        conf = rng.uniform(0, 1, size=(2, 3, 3))
        assert thresholded_ce(p, pseudo, conf, 1.0).item() == 0.0

    def test_tau_zero_equals_ce(self):
        rng = np.random.default_rng(5)
        p = prob(random_prob_map(rng, (2, 9, 3, 3)))
        pseudo = rng.integers(0, 9, size=(2, 3, 3))
        conf = rng.uniform(0.01, 1, size=(2, 3, 3))
        got = thresholded_ce(p, pseudo, conf, 0.0).item()
        assert got == pytest.approx(ce_loss(p, pseudo).item(), abs=1e-12)

    def test_two_pixel_hand_value(self):
        # confidences (0.9, 0.5) at tau 0.8: only the first pixel counts
        p = prob(np.array([[[[0.5, 0.1]], [[0.5, 0.9]]]]))
        pseudo = np.zeros((1, 1, 2), dtype=np.int64)
        conf = np.array([[[0.9, 0.5]]])
        loss = thresholded_ce(p, pseudo, conf, 0.8)
        assert loss.item() == pytest.approx(math.log(2.0) / 2.0, abs=1e-12)

    def test_monotone_nonincreasing_in_tau(self):
        rng = np.random.default_rng(6)
        p = prob(random_prob_map(rng, (2, 9, 4, 4)))
        pseudo = rng.integers(0, 9, size=(2, 4, 4))
        conf = rng.uniform(0, 1, size=(2, 4, 4))
        values = [thresholded_ce(p, pseudo, conf, tau).item()
                  for tau in np.linspace(0, 1, 11)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


class TestConsistencyL2:
    def test_identical_maps_zero(self):
        p = random_prob_map(np.random.default_rng(7), (2, 4, 3, 3))
        assert consistency_l2(prob(p), prob(p.copy())).item() == 0.0

    def test_maximal_two_class_distance(self):
        assert consistency_l2(one_pixel([1.0, 0.0]), one_pixel([0.0, 1.0])).item() == 2.0

    def test_hand_value(self):
        loss = consistency_l2(one_pixel([0.6, 0.4]), one_pixel([0.4, 0.6]))
        assert loss.item() == pytest.approx(0.08, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        from ssrl.errors import ShapeError
        with pytest.raises(ShapeError):
            consistency_l2(one_pixel([1.0, 0.0]), prob(np.ones((1, 2, 2, 2)) / 2))

    def test_gradients_flow_to_both_sides(self):
        rng = np.random.default_rng(8)
        a = Tensor(random_prob_map(rng, (1, 3, 2, 2)), track_grad=True)
        b = Tensor(random_prob_map(rng, (1, 3, 2, 2)), track_grad=True)
        backward(consistency_l2(a, b))
        assert np.allclose(a.grad, -b.grad, atol=1e-15)
        assert np.abs(a.grad).max() > 0


class TestCombinedLoss:
    @pytest.mark.parametrize("a,b,expect", [(0.0, 0.0, 0.0), (1.0, 0.0, 0.5),
                                            (0.7, 0.3, 0.5)])
    def test_values(self, a, b, expect):
        got = combined_loss(Tensor.scalar(a), Tensor.scalar(b)).item()
        assert got == pytest.approx(expect, abs=1e-15)

    def test_gradient_splits_equally(self):
        a = Tensor.scalar(1.0)
        a.track_grad = True
        b = Tensor.scalar(2.0)
        b.track_grad = True
        backward(combined_loss(a, b))
        assert a.grad.item() == 0.5 and b.grad.item() == 0.5


class TestLossConfig:
    def test_validation(self):
        LossConfig(kind="beta_ce", beta=0.5, tau=0.9)
        with pytest.raises(ValueError):
            LossConfig(kind="nope")
        with pytest.raises(ValueError):
            LossConfig(beta=-1.0)
        with pytest.raises(ValueError):
            LossConfig(tau=1.5)


class TestLossGradientsThroughSoftmax:
    """FD oracle for every loss w.r.t. logits, chained through the softmax."""

    def _check(self, build, rng, tol=1e-5):
        z0 = rng.uniform(-2, 2, size=(2, 9, 3, 3))

        def value(zv):
            return build(softmax_channels(Tensor(zv))).item()

        z = Tensor(z0.copy(), track_grad=True)
        backward(build(softmax_channels(z)))
        assert max_rel_err(z.grad, fd_grad(value, z0.copy())) < tol

    def test_ce(self):
        rng = np.random.default_rng(10)
        labels = rng.integers(0, 9, size=(2, 3, 3))
        self._check(lambda p: ce_loss(p, labels), rng)

    def test_beta_ce(self):
        rng = np.random.default_rng(11)
        labels = rng.integers(0, 9, size=(2, 3, 3))
        self._check(lambda p: beta_ce(p, labels, 0.5), rng)

    def test_thresholded_ce(self):
        rng = np.random.default_rng(12)
        labels = rng.integers(0, 9, size=(2, 3, 3))
        conf = rng.uniform(0, 1, size=(2, 3, 3))
        self._check(lambda p: thresholded_ce(p, labels, conf, 0.5), rng)

    def test_consistency_l2(self):
        rng = np.random.default_rng(13)
        other = Tensor(random_prob_map(rng, (2, 9, 3, 3)))
        self._check(lambda p: consistency_l2(p, other), rng)

    def test_all_losses_nonnegative(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            p = prob(random_prob_map(rng, (2, 9, 3, 3)))
            q = prob(random_prob_map(rng, (2, 9, 3, 3)))
            labels = rng.integers(0, 9, size=(2, 3, 3))
            conf = rng.uniform(0, 1, size=(2, 3, 3))
            assert ce_loss(p, labels).item() >= 0
            assert beta_ce(p, labels, 0.5).item() >= 0
            assert thresholded_ce(p, labels, conf, 0.95).item() >= 0
            assert consistency_l2(p, q).item() >= 0

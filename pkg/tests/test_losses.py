import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmiqa.errors import ConfigurationError
from filmiqa.gradcheck import run_check
from filmiqa.losses import LossConfig, mse_loss, pairwise_rank_loss, total_loss
from filmiqa.nn import make_rng

finite_floats = st.floats(-10.0, 10.0, allow_nan=False)


class TestPairwiseRankLoss:
    def test_equal_predictions_give_ln2(self):
        loss, _ = pairwise_rank_loss(np.array([1.7, 1.7]), np.array([1.0, 0.0]))
        assert loss == pytest.approx(math.log(2.0), abs=1e-9)

    def test_confident_correct_pair(self):
        # softplus(-7.6) for both ordered pairs
        expected = math.log1p(math.exp(-7.6))
        loss, _ = pairwise_rank_loss(np.array([3.9, 0.1]), np.array([1.0, 0.0]),
                                     tau_rank=0.5)
        assert loss == pytest.approx(expected, abs=1e-12)
        assert loss == pytest.approx(5.0e-4, abs=1e-5)

    def test_all_tied_returns_zero(self):
        loss, grad = pairwise_rank_loss(np.array([0.3, 2.9, 1.1]),
                                        np.array([2.0, 2.0, 2.0]))
        assert loss == 0.0
        assert not grad.any()

    def test_singleton_batch_has_no_pairs(self):
        loss, grad = pairwise_rank_loss(np.array([1.0]), np.array([2.0]))
        assert loss == 0.0
        assert not grad.any()

    def test_ordered_mean_equals_unordered_mean(self):
        # (i, j) and (j, i) contribute identical terms, so the ordered-pair
        # mean equals the mean over unordered pairs computed by hand
        rng = make_rng(0)
        pred = rng.standard_normal(8)
        target = np.array([0.0, 1.0, 1.0, 2.0, 2.5, 3.0, 3.0, 4.0])
        loss, _ = pairwise_rank_loss(pred, target, tau_rank=0.5)
        terms = []
        for i in range(8):
            for j in range(i + 1, 8):
                if target[i] == target[j]:
                    continue
                s = math.copysign(1.0, target[i] - target[j])
                u = -s * (pred[i] - pred[j]) / 0.5
                terms.append(math.log1p(math.exp(-abs(u))) + max(u, 0.0))
        assert loss == pytest.approx(sum(terms) / len(terms), abs=1e-12)

    @given(st.lists(finite_floats, min_size=2, max_size=8), st.floats(-50, 50))
    @settings(max_examples=50, deadline=None)
    def test_translation_invariance(self, preds, shift):
        pred = np.array(preds)
        target = np.arange(len(preds), dtype=float) % 3
        base, _ = pairwise_rank_loss(pred, target)
        moved, _ = pairwise_rank_loss(pred + shift, target)
        assert moved == pytest.approx(base, abs=1e-6)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_widening_correct_margin_never_increases_loss(self, seed):
        rng = make_rng(seed)
        pred = rng.standard_normal(6)
        target = rng.integers(0, 5, size=6).astype(float)
        if np.all(target == target[0]):
            target[0] += 1.0
        hi = int(np.argmax(target))
        base, _ = pairwise_rank_loss(pred, target)
        pred2 = pred.copy()
        pred2[hi] += rng.uniform(0.1, 2.0)
        bumped, _ = pairwise_rank_loss(pred2, target)
        assert bumped <= base + 1e-12

    def test_lower_bound_and_decay_with_margin(self):
        target = np.array([1.0, 0.0])
        losses = [pairwise_rank_loss(np.array([m, -m]), target)[0]
                  for m in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert all(v >= 0.0 for v in losses)

    def test_empty_batch_rejected(self):
        with pytest.raises(ConfigurationError):
            pairwise_rank_loss(np.array([]), np.array([]))

    def test_gradcheck(self):
        assert run_check("rank_loss", seeds=10).passed


class TestMseLoss:
    def test_perfect_predictions(self):
        value, grad = mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert value == 0.0
        assert not grad.any()

    def test_hand_arithmetic(self):
        value, _ = mse_loss(np.array([0.0, 0.0]), np.array([1.0, 3.0]))
        assert value == pytest.approx(5.0, abs=1e-12)

    def test_gradient_formula(self):
        pred = np.array([1.0, 2.0, 4.0])
        target = np.array([0.0, 2.0, 1.0])
        _, grad = mse_loss(pred, target)
        np.testing.assert_allclose(grad, 2.0 * (pred - target) / 3.0, atol=1e-15)

    def test_gradcheck(self):
        assert run_check("mse_loss", seeds=10).passed


class TestTotalLoss:
    def test_default_config_is_pure_ranking(self):
        pred = np.array([0.5, 2.5, 1.0])
        target = np.array([0.0, 3.0, 1.0])
        cfg = LossConfig()
        assert total_loss(pred, target, cfg)[0] == pairwise_rank_loss(pred, target)[0]

    def test_pure_mse(self):
        pred = np.array([0.5, 2.5])
        target = np.array([0.0, 3.0])
        cfg = LossConfig(lambda_rank=0.0, lambda_mse=1.0)
        assert total_loss(pred, target, cfg)[0] == mse_loss(pred, target)[0]

    def test_weighted_sum_on_hand_example(self):
        pred = np.array([1.7, 1.7])
        target = np.array([1.0, 0.0])
        cfg = LossConfig(lambda_rank=1.0, lambda_mse=0.5)
        mse = ((1.7 - 1.0) ** 2 + (1.7 - 0.0) ** 2) / 2.0
        expected = math.log(2.0) + 0.5 * mse
        assert total_loss(pred, target, cfg)[0] == pytest.approx(expected, abs=1e-12)

    def test_weighting_linearity_exact(self):
        rng = make_rng(1)
        pred = rng.standard_normal(6)
        target = np.array([0.0, 1.0, 2.0, 2.0, 3.0, 4.0])
        rank, _ = pairwise_rank_loss(pred, target, tau_rank=0.5)
        mse, _ = mse_loss(pred, target)
        for lr, lm in ((1.0, 0.0), (0.0, 1.0), (1.0, 0.5), (2.0, 3.0)):
            cfg = LossConfig(tau_rank=0.5, lambda_rank=lr, lambda_mse=lm)
            assert total_loss(pred, target, cfg)[0] == lr * rank + lm * mse

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            LossConfig(tau_rank=0.0)
        with pytest.raises(ConfigurationError):
            LossConfig(lambda_rank=0.0, lambda_mse=0.0)
        with pytest.raises(ConfigurationError):
            LossConfig(lambda_rank=-1.0)

    def test_gradcheck_mixed_weights(self):
        assert run_check("total_loss", seeds=10).passed

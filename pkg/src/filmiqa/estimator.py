"""scikit-learn compatible facade over the quality head.

``TokenQualityRegressor`` fits the prompt-conditioned head on a batch of
precomputed patch tokens X of shape (n_samples, n_tokens, n_channels) and
labels y in [0, 4]. It follows the estimator contract (get_params /
set_params / clone-able constructor, fitted attributes with trailing
underscores), so it drops into pipelines and model-selection utilities
that accept 3-D inputs.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .losses import LossConfig, total_loss
from .model import QualityHead
from .nn import AdamW, CosineSchedule, make_rng
from .validation import check_mos, check_prompt, check_token_batch


class TokenQualityRegressor(BaseEstimator, RegressorMixin):
    """Prompt-conditioned regressor from patch tokens to a (0, 4) score.

    Parameters mirror the training recipe: AdamW with cosine-annealed
    learning rate, micro-batches with gradient accumulation, pairwise
    ranking loss by default (``lambda_mse`` adds an MSE term). When
    ``prompt_embedding`` is None a fixed basis vector of width d is used,
    which makes the modulation a pure learned transform of the tokens.
    """

    def __init__(self, prompt_embedding=None, film_strength: float = 1.0,
                 tau_out: float = 2.0, tau_rank: float = 0.5,
                 lambda_rank: float = 1.0, lambda_mse: float = 0.0,
                 lr: float = 1e-5, weight_decay: float = 1e-4,
                 batch_size: int = 4, accum_steps: int = 2, epochs: int = 22,
                 min_lr: float = 0.0, film_hidden: int | None = None,
                 head_hidden: int = 64, fusion_hidden: int = 16,
                 seed: int = 0):
        self.prompt_embedding = prompt_embedding
        self.film_strength = film_strength
        self.tau_out = tau_out
        self.tau_rank = tau_rank
        self.lambda_rank = lambda_rank
        self.lambda_mse = lambda_mse
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.accum_steps = accum_steps
        self.epochs = epochs
        self.min_lr = min_lr
        self.film_hidden = film_hidden
        self.head_hidden = head_hidden
        self.fusion_hidden = fusion_hidden
        self.seed = seed

    def _resolved_prompt(self, channels: int) -> np.ndarray:
        if self.prompt_embedding is None:
            prompt = np.zeros(channels, dtype=np.float32)
            prompt[0] = 1.0
            return prompt
        return check_prompt(self.prompt_embedding)

    def fit(self, X, y):
        X = check_token_batch(X)
        y = check_mos(y, n=X.shape[0])
        n, _, channels = X.shape
        prompt = self._resolved_prompt(channels)

        model = QualityHead(
            channels=channels, prompt_dim=prompt.shape[0],
            film_strength=self.film_strength, tau_out=self.tau_out,
            film_hidden=self.film_hidden, head_hidden=self.head_hidden,
            fusion_hidden=self.fusion_hidden, seed=self.seed)
        optimizer = AdamW(model.parameters(), lr=self.lr,
                          weight_decay=self.weight_decay)
        loss_cfg = LossConfig(tau_rank=self.tau_rank,
                              lambda_rank=self.lambda_rank,
                              lambda_mse=self.lambda_mse)
        micro_per_epoch = math.ceil(n / self.batch_size)
        steps_per_epoch = math.ceil(micro_per_epoch / self.accum_steps)
        schedule = CosineSchedule(self.lr, total_steps=self.epochs * steps_per_epoch,
                                  min_lr=self.min_lr)

        rng = make_rng(self.seed)
        step = 0
        last_loss = float("nan")
        for _ in range(self.epochs):
            order = rng.permutation(n)
            pending = 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                pred = model.forward(X[idx], prompt)
                last_loss, grad = total_loss(pred, y[idx], loss_cfg)
                model.backward(grad / self.accum_steps)
                pending += 1
                if pending == self.accum_steps or start + self.batch_size >= n:
                    optimizer.step(lr=schedule.lr(step))
                    step += 1
                    pending = 0

        self.model_ = model
        self.prompt_ = prompt
        self.n_features_in_ = channels
        self.final_loss_ = last_loss
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("fit must be called before predict")
        X = check_token_batch(X, channels=self.n_features_in_)
        return np.asarray(self.model_.predict(X, self.prompt_), dtype=np.float64)

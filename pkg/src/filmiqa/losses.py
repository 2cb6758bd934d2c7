"""Training losses: pairwise ranking over non-tied pairs, MSE, and their
weighted sum. Each returns (value, gradient wrt predictions)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .nn import softplus, stable_sigmoid

log = logging.getLogger(__name__)


@dataclass
class LossConfig:
    tau_rank: float = 0.5
    lambda_rank: float = 1.0
    lambda_mse: float = 0.0

    def __post_init__(self):
        if self.tau_rank <= 0:
            raise ConfigurationError(f"tau_rank must be > 0, got {self.tau_rank}")
        if self.lambda_rank < 0 or self.lambda_mse < 0:
            raise ConfigurationError("loss weights must be >= 0")
        if self.lambda_rank == 0 and self.lambda_mse == 0:
            raise ConfigurationError("at least one loss weight must be positive")


def pairwise_rank_loss(pred: np.ndarray, target: np.ndarray,
                       tau_rank: float = 0.5) -> tuple[float, np.ndarray]:
    """Mean softplus(-sign(y_i - y_j) (p_i - p_j) / tau) over all ordered
    pairs with y_i != y_j. Tied pairs are masked out; a fully tied batch
    contributes zero loss and zero gradient.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    n = pred.shape[0]
    if n == 0:
        raise ConfigurationError("rank loss needs at least 1 sample")
    if n == 1:
        # a singleton batch has no pairs, same contract as a fully tied one
        log.debug("rank loss: singleton batch, no pairs")
        return 0.0, np.zeros_like(pred)
    sign = np.sign(target[:, None] - target[None, :])
    mask = sign != 0.0
    n_pairs = int(mask.sum())
    if n_pairs == 0:
        log.debug("rank loss: all %d labels tied, no pairs", n)
        return 0.0, np.zeros_like(pred)
    diff = pred[:, None] - pred[None, :]
    u = -sign * diff / tau_rank
    loss = float(softplus(u)[mask].sum() / n_pairs)
    # d softplus(u)/du = sigmoid(u); u depends on p_i (+) and p_j (-)
    w = stable_sigmoid(u) * mask * (-sign / tau_rank) / n_pairs
    grad = w.sum(axis=1) - w.sum(axis=0)
    return loss, grad


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    n = pred.shape[0]
    if n < 1:
        raise ConfigurationError("mse loss needs at least 1 sample")
    err = pred - target
    return float((err * err).mean()), 2.0 * err / n


def total_loss(pred: np.ndarray, target: np.ndarray,
               cfg: LossConfig) -> tuple[float, np.ndarray]:
    """lambda_rank * rank + lambda_mse * mse; skips terms weighted zero."""
    value = 0.0
    grad = np.zeros(np.asarray(pred).shape[0], dtype=np.float64)
    if cfg.lambda_rank != 0.0:
        v, g = pairwise_rank_loss(pred, target, cfg.tau_rank)
        value += cfg.lambda_rank * v
        grad += cfg.lambda_rank * g
    if cfg.lambda_mse != 0.0:
        v, g = mse_loss(pred, target)
        value += cfg.lambda_mse * v
        grad += cfg.lambda_mse * g
    return value, grad

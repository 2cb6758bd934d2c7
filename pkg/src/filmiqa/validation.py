"""Input validation helpers shared by the estimator and the trainer."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


def check_token_batch(X, channels: int | None = None) -> np.ndarray:
    """Coerce to a finite float32 array of shape (n, P, d)."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 3:
        raise ConfigurationError(
            f"expected token batch of shape (n, P, d), got {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0 or X.shape[2] == 0:
        raise ConfigurationError(f"empty token batch {X.shape}")
    if channels is not None and X.shape[2] != channels:
        raise ConfigurationError(
            f"token channels {X.shape[2]} != expected {channels}")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("token batch contains NaN or Inf")
    return X


def check_mos(y, n: int | None = None) -> np.ndarray:
    """Coerce labels to float64 in [0, 4]."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if n is not None and y.shape[0] != n:
        raise ConfigurationError(f"{y.shape[0]} labels for {n} samples")
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("labels contain NaN or Inf")
    if y.size and (y.min() < 0.0 or y.max() > 4.0):
        raise ConfigurationError("labels must lie in [0, 4]")
    return y


def check_prompt(z, prompt_dim: int | None = None) -> np.ndarray:
    """Coerce to a finite unit-norm float32 vector."""
    z = np.asarray(z, dtype=np.float32).reshape(-1)
    if z.size == 0:
        raise ConfigurationError("empty prompt embedding")
    if prompt_dim is not None and z.shape[0] != prompt_dim:
        raise ConfigurationError(
            f"prompt width {z.shape[0]} != expected {prompt_dim}")
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("prompt embedding contains NaN or Inf")
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise ConfigurationError("prompt embedding is the zero vector")
    return z / np.float32(norm)

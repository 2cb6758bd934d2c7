"""Prompt-driven feature modulation.

A two-layer MLP maps the normalized prompt embedding to per-channel scale
and shift vectors (gamma, beta); tokens are then modulated as

    out = tokens * (1 + s * tanh(gamma)) + s * beta

with (gamma, beta) broadcast across all tokens of a sample. The tanh keeps
every per-channel scale factor inside [1 - s, 1 + s]. The final generator
layer starts at zero, so an untrained generator is an exact identity.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ConfigurationError
from .nn import MLP2, Parameter, _check_finite

NORM_TOL = 1e-5


class FilmGenerator:
    """Maps a prompt embedding of width ``prompt_dim`` to (gamma, beta) of
    width ``channels`` each. Output layout is [gamma || beta], fixed."""

    def __init__(self, prompt_dim: int, channels: int, rng,
                 hidden: int | None = None, dtype=np.float32):
        self.prompt_dim = prompt_dim
        self.channels = channels
        self.hidden = prompt_dim if hidden is None else hidden
        self.mlp = MLP2(prompt_dim, self.hidden, 2 * channels, "film",
                        rng, zero_init_last=True, dtype=dtype)

    def parameters(self) -> list[Parameter]:
        return self.mlp.parameters()

    def forward(self, prompt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        prompt = np.asarray(prompt)
        if prompt.shape != (self.prompt_dim,):
            raise ConfigurationError(
                f"prompt width {prompt.shape} != ({self.prompt_dim},)")
        norm = float(np.linalg.norm(prompt))
        if abs(norm - 1.0) > NORM_TOL:
            if norm == 0.0:
                raise ConfigurationError("prompt embedding is the zero vector")
            warnings.warn(
                f"prompt embedding norm {norm:.6f} != 1; renormalizing",
                stacklevel=2)
            prompt = prompt / norm
        out = self.mlp.forward(prompt[None, :])[0]
        return out[: self.channels], out[self.channels:]

    def backward(self, grad_gamma: np.ndarray, grad_beta: np.ndarray) -> np.ndarray:
        """Accumulates generator gradients; returns grad wrt the prompt."""
        grad_out = np.concatenate([grad_gamma, grad_beta])[None, :]
        return self.mlp.backward(grad_out)[0]


class Modulation:
    """Bounded channel-wise affine modulation of patch tokens."""

    def __init__(self, strength: float = 1.0):
        if strength < 0:
            raise ConfigurationError(f"film strength must be >= 0, got {strength}")
        self.strength = strength
        self._cache = None

    def forward(self, tokens: np.ndarray, gamma: np.ndarray,
                beta: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens)
        d = tokens.shape[-1]
        if gamma.shape != (d,) or beta.shape != (d,):
            raise ConfigurationError(
                f"gamma/beta width {gamma.shape}/{beta.shape} != token channels {d}")
        s = self.strength
        if s == 0.0:
            # exact passthrough, bitwise
            self._cache = (tokens, gamma, None)
            return tokens
        t = np.tanh(gamma)
        self._cache = (tokens, gamma, t)
        scale = (1.0 + s * t).astype(tokens.dtype)
        shift = (s * beta).astype(tokens.dtype)
        return _check_finite("modulate", tokens * scale + shift)

    def backward(self, grad_out: np.ndarray):
        """Returns (grad_tokens, grad_gamma, grad_beta)."""
        if self._cache is None:
            raise RuntimeError("modulate: backward called before forward")
        tokens, gamma, t = self._cache
        self._cache = None
        s = self.strength
        if s == 0.0:
            d = tokens.shape[-1]
            zeros = np.zeros(d, dtype=grad_out.dtype)
            return grad_out, zeros, zeros.copy()
        reduce_axes = tuple(range(grad_out.ndim - 1))
        grad_tokens = grad_out * (1.0 + s * t)
        grad_gamma = s * (1.0 - t * t) * (grad_out * tokens).sum(axis=reduce_axes)
        grad_beta = s * grad_out.sum(axis=reduce_axes)
        return grad_tokens, grad_gamma, grad_beta

"""The full quality head: modulate -> pool -> branch heads -> fuse.

Operates on precomputed patch tokens (B, P, d) plus one normalized prompt
embedding shared by every sample. A model instance is a pure function of
(config, seed); forward caches what backward needs, and backward returns
the gradient with respect to the input tokens while accumulating parameter
gradients in place.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .film import FilmGenerator, Modulation
from .heads import BranchHeads, FusionHead
from .nn import Parameter, make_rng
from .pooling import PoolAll


class QualityHead:

    def __init__(self, channels: int, prompt_dim: int, film_strength: float = 1.0,
                 tau_out: float = 2.0, film_hidden: int | None = None,
                 head_hidden: int = 64, fusion_hidden: int = 16,
                 seed: int = 0, dtype=np.float32):
        self.channels = channels
        self.prompt_dim = prompt_dim
        self.film_strength = film_strength
        self.tau_out = tau_out
        self.film_hidden = prompt_dim if film_hidden is None else film_hidden
        self.head_hidden = head_hidden
        self.fusion_hidden = fusion_hidden
        self.seed = seed
        self.dtype = np.dtype(dtype)

        rng = make_rng(seed)
        self.film = FilmGenerator(prompt_dim, channels, rng,
                                  hidden=self.film_hidden, dtype=dtype)
        self.modulation = Modulation(film_strength)
        self.pool = PoolAll()
        self.heads = BranchHeads(channels, rng, hidden=head_hidden, dtype=dtype)
        self.fusion = FusionHead(rng, hidden=fusion_hidden, tau_out=tau_out, dtype=dtype)

    def parameters(self) -> list[Parameter]:
        return (self.film.parameters() + self.heads.parameters()
                + self.fusion.parameters())

    def param_dict(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def forward(self, tokens: np.ndarray, prompt: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=self.dtype)
        if tokens.ndim != 3 or tokens.shape[2] != self.channels:
            raise ConfigurationError(
                f"tokens shape {tokens.shape} incompatible with d={self.channels}")
        gamma, beta = self.film.forward(np.asarray(prompt, dtype=self.dtype))
        modulated = self.modulation.forward(tokens, gamma, beta)
        pooled = self.pool.forward(modulated)
        sub_scores = self.heads.forward(pooled)
        return self.fusion.forward(sub_scores)

    def backward(self, grad_scores: np.ndarray) -> np.ndarray:
        grad_sub = self.fusion.backward(np.asarray(grad_scores, dtype=self.dtype))
        grad_pooled = self.heads.backward(grad_sub)
        grad_modulated = self.pool.backward(grad_pooled)
        grad_tokens, grad_gamma, grad_beta = self.modulation.backward(grad_modulated)
        self.film.backward(grad_gamma, grad_beta)
        return grad_tokens

    def predict(self, tokens: np.ndarray, prompt: np.ndarray) -> np.ndarray:
        """Forward pass returning scores in the open interval (0, 4)."""
        return self.forward(tokens, prompt)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def config(self) -> dict:
        return {
            "channels": self.channels,
            "prompt_dim": self.prompt_dim,
            "film_strength": self.film_strength,
            "tau_out": self.tau_out,
            "film_hidden": self.film_hidden,
            "head_hidden": self.head_hidden,
            "fusion_hidden": self.fusion_hidden,
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, cfg: dict, dtype=np.float32) -> "QualityHead":
        return cls(channels=cfg["channels"], prompt_dim=cfg["prompt_dim"],
                   film_strength=cfg["film_strength"], tau_out=cfg["tau_out"],
                   film_hidden=cfg["film_hidden"], head_hidden=cfg["head_hidden"],
                   fusion_hidden=cfg["fusion_hidden"], seed=cfg["seed"],
                   dtype=dtype)

    def load_values(self, named: dict[str, np.ndarray]) -> None:
        params = self.param_dict()
        missing = set(params) - set(named)
        extra = set(named) - set(params)
        if missing or extra:
            raise ConfigurationError(
                f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(named[name], dtype=self.dtype)
            if arr.shape != p.value.shape:
                raise ConfigurationError(
                    f"{name}: shape {arr.shape} != expected {p.value.shape}")
            p.value = arr
            p.grad = np.zeros_like(arr)

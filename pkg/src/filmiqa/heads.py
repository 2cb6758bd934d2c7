"""Branch regression heads, fusion MLP, and the bounded score map.

Each pooled summary feeds its own two-layer head producing one unbounded
sub-score per sample. The three sub-scores are concatenated (raw, no
activation in between) into a two-layer fusion MLP whose scalar output is
squashed to the label range:

    score = 4 * sigmoid(logit / tau_out)

The fusion MLP's final layer starts at zero so an untrained stack emits
exactly 2.0, the midpoint of the 0..4 scale; its gradient stays alive
because the branch heads (dense-initialized) feed it sample-dependent
hidden activations from the first step.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .nn import MLP2, Parameter, stable_sigmoid
from .pooling import PooledFeatures

SCORE_RANGE = 4.0


class BranchHeads:
    """Three independent heads: widths d -> 1, 4d -> 1, 2d -> 1."""

    def __init__(self, channels: int, rng, hidden: int = 64, dtype=np.float32):
        self.channels = channels
        self.head_global = MLP2(channels, hidden, 1, "head_global", rng, dtype=dtype)
        self.head_local = MLP2(4 * channels, hidden, 1, "head_local", rng, dtype=dtype)
        self.head_texture = MLP2(2 * channels, hidden, 1, "head_texture", rng, dtype=dtype)

    def parameters(self) -> list[Parameter]:
        return (self.head_global.parameters()
                + self.head_local.parameters()
                + self.head_texture.parameters())

    def forward(self, pooled: PooledFeatures) -> np.ndarray:
        """Returns sub-scores stacked as (B, 3)."""
        return np.concatenate([
            self.head_global.forward(pooled.global_mean),
            self.head_local.forward(pooled.local_means),
            self.head_texture.forward(pooled.texture_max),
        ], axis=1)

    def backward(self, grad_scores: np.ndarray) -> PooledFeatures:
        return PooledFeatures(
            global_mean=self.head_global.backward(grad_scores[:, 0:1]),
            local_means=self.head_local.backward(grad_scores[:, 1:2]),
            texture_max=self.head_texture.backward(grad_scores[:, 2:3]),
        )


class FusionHead:
    """Two-layer MLP over the three sub-scores plus the temperature sigmoid."""

    def __init__(self, rng, hidden: int = 16, tau_out: float = 2.0, dtype=np.float32):
        if tau_out <= 0:
            raise ConfigurationError(f"tau_out must be > 0, got {tau_out}")
        self.tau_out = tau_out
        self.mlp = MLP2(3, hidden, 1, "fusion", rng, zero_init_last=True, dtype=dtype)
        self._sig = None

    def parameters(self) -> list[Parameter]:
        return self.mlp.parameters()

    def forward(self, sub_scores: np.ndarray) -> np.ndarray:
        logit = self.mlp.forward(sub_scores)[:, 0]
        return self.squash(logit)

    def squash(self, logit: np.ndarray) -> np.ndarray:
        sig = stable_sigmoid(np.asarray(logit) / self.tau_out)
        self._sig = sig
        return SCORE_RANGE * sig

    def backward(self, grad_score: np.ndarray) -> np.ndarray:
        if self._sig is None:
            raise RuntimeError("fusion: backward called before forward")
        sig = self._sig
        self._sig = None
        grad_logit = grad_score * SCORE_RANGE * sig * (1.0 - sig) / self.tau_out
        return self.mlp.backward(grad_logit[:, None])

"""Token-axis pooling summaries: global mean (1 bin), local means (4 bins),
texture maxima (2 bins).

Pooling is 1-D over the flattened token sequence, NOT over 2-D image
quadrants: the math operates on V of shape (B, d, P) and reduces the P
axis, so "4-region" here means four contiguous index ranges of the token
sequence. Bin k spans token indices [floor(k*P/K), floor((k+1)*P/K)), the
standard adaptive-pooling boundary rule; the default P = 784 divides
evenly by 2 and 4. Bins are concatenated in bin order, each contributing
d channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def bin_edges(num_tokens: int, num_bins: int) -> list[tuple[int, int]]:
    """Contiguous [lo, hi) bin boundaries partitioning range(num_tokens)."""
    if num_tokens < num_bins:
        raise ConfigurationError(
            f"cannot split {num_tokens} tokens into {num_bins} bins")
    return [(num_tokens * k // num_bins, num_tokens * (k + 1) // num_bins)
            for k in range(num_bins)]


class AvgPoolBins:
    """Per-channel mean over each token bin; output (B, K*d)."""

    def __init__(self, num_bins: int):
        self.num_bins = num_bins
        self._cache = None

    def forward(self, v: np.ndarray) -> np.ndarray:
        batch, channels, tokens = v.shape
        edges = bin_edges(tokens, self.num_bins)
        out = np.empty((batch, self.num_bins * channels), dtype=v.dtype)
        for k, (lo, hi) in enumerate(edges):
            out[:, k * channels:(k + 1) * channels] = v[:, :, lo:hi].mean(axis=2)
        self._cache = (v.shape, edges)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("avg pool: backward called before forward")
        (batch, channels, tokens), edges = self._cache
        self._cache = None
        grad_v = np.zeros((batch, channels, tokens), dtype=grad_out.dtype)
        for k, (lo, hi) in enumerate(edges):
            g = grad_out[:, k * channels:(k + 1) * channels] / (hi - lo)
            grad_v[:, :, lo:hi] = g[:, :, None]
        return grad_v


class MaxPoolBins:
    """Per-channel max over each token bin; ties route gradient to the
    first (lowest-index) maximal token."""

    def __init__(self, num_bins: int):
        self.num_bins = num_bins
        self._cache = None

    def forward(self, v: np.ndarray) -> np.ndarray:
        batch, channels, tokens = v.shape
        edges = bin_edges(tokens, self.num_bins)
        out = np.empty((batch, self.num_bins * channels), dtype=v.dtype)
        argmaxes = []
        for k, (lo, hi) in enumerate(edges):
            block = v[:, :, lo:hi]
            idx = block.argmax(axis=2)
            out[:, k * channels:(k + 1) * channels] = np.take_along_axis(
                block, idx[:, :, None], axis=2)[:, :, 0]
            argmaxes.append(idx)
        self._cache = (v.shape, edges, argmaxes)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("max pool: backward called before forward")
        (batch, channels, tokens), edges, argmaxes = self._cache
        self._cache = None
        grad_v = np.zeros((batch, channels, tokens), dtype=grad_out.dtype)
        rows = np.arange(batch)[:, None]
        cols = np.arange(channels)[None, :]
        for k, (lo, hi) in enumerate(edges):
            g = grad_out[:, k * channels:(k + 1) * channels]
            grad_v[rows, cols, lo + argmaxes[k]] += g
        return grad_v


def avg_pool_bins(v: np.ndarray, num_bins: int) -> np.ndarray:
    return AvgPoolBins(num_bins).forward(v)


def max_pool_bins(v: np.ndarray, num_bins: int) -> np.ndarray:
    return MaxPoolBins(num_bins).forward(v)


@dataclass
class PooledFeatures:
    """The three pooled summaries: widths d, 4d, 2d."""
    global_mean: np.ndarray   # (B, d)
    local_means: np.ndarray   # (B, 4d)
    texture_max: np.ndarray   # (B, 2d)


class PoolAll:
    """Transpose tokens (B, P, d) to (B, d, P) and apply all three poolings."""

    GLOBAL_BINS = 1
    LOCAL_BINS = 4
    TEXTURE_BINS = 2

    def __init__(self):
        self.avg_global = AvgPoolBins(self.GLOBAL_BINS)
        self.avg_local = AvgPoolBins(self.LOCAL_BINS)
        self.max_texture = MaxPoolBins(self.TEXTURE_BINS)

    def forward(self, tokens: np.ndarray) -> PooledFeatures:
        if tokens.ndim != 3:
            raise ConfigurationError(
                f"expected tokens of shape (B, P, d), got {tokens.shape}")
        v = np.ascontiguousarray(tokens.transpose(0, 2, 1))
        return PooledFeatures(
            global_mean=self.avg_global.forward(v),
            local_means=self.avg_local.forward(v),
            texture_max=self.max_texture.forward(v),
        )

    def backward(self, grad: PooledFeatures) -> np.ndarray:
        grad_v = (self.avg_global.backward(grad.global_mean)
                  + self.avg_local.backward(grad.local_means)
                  + self.max_texture.backward(grad.texture_max))
        return grad_v.transpose(0, 2, 1)

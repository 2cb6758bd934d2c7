"""Dense numeric substrate: parameters, linear layers, activations, AdamW,
and the cosine learning-rate schedule.

Everything is plain NumPy with hand-derived backward passes. Layers cache
their forward activations and accumulate parameter gradients on backward;
the optimizer zeroes gradients at step boundaries. Training runs in float32
by default; gradient checking builds the same modules in float64.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_DEBUG_FINITE = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertions after every forward/backward op."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


def _check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if _DEBUG_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {name}")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; all initialization and shuffling flows through these."""
    return np.random.default_rng(seed)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """sigma(x) without overflow for large negative x."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) via max(x, 0) + log1p(e^-|x|)."""
    x = np.asarray(x)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


class Parameter:
    """Named value tensor with a same-shape gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual dense-layer default."""
    bound = 1.0 / math.sqrt(fan_in) if fan_in > 0 else 0.0
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear:
    """y = x W + b over the last axis. Caches x for backward.

    Accepts (B, m) or (B, T, m) inputs; gradients for W and b accumulate
    across all leading axes.
    """

    def __init__(self, in_dim: int, out_dim: int, name: str,
                 rng: np.random.Generator | None = None,
                 zero_init: bool = False, dtype=np.float32):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.dtype = np.dtype(dtype)
        if zero_init:
            w = np.zeros((in_dim, out_dim), dtype=self.dtype)
            b = np.zeros(out_dim, dtype=self.dtype)
        else:
            if rng is None:
                raise ConfigurationError(f"{name}: rng required unless zero_init")
            w = kaiming_uniform(rng, (in_dim, out_dim), in_dim, self.dtype)
            b = kaiming_uniform(rng, (out_dim,), in_dim, self.dtype)
        self.W = Parameter(f"{name}.W", w)
        self.b = Parameter(f"{name}.b", b)
        self._x = None

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(
                f"{self.W.name}: input width {x.shape[-1]} != {self.in_dim}")
        self._x = x
        return _check_finite(self.W.name, x @ self.W.value + self.b.value)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError(f"{self.W.name}: backward called before forward")
        x = self._x
        grad_out = np.asarray(grad_out, dtype=self.dtype)
        if grad_out.shape != x.shape[:-1] + (self.out_dim,):
            raise ConfigurationError(
                f"{self.W.name}: grad shape {grad_out.shape} does not match forward")
        x2 = x.reshape(-1, self.in_dim)
        g2 = grad_out.reshape(-1, self.out_dim)
        self.W.grad += x2.T @ g2
        self.b.grad += g2.sum(axis=0)
        self._x = None
        return _check_finite(self.W.name, grad_out @ self.W.value.T)


class GELU:
    """Exact (erf-based) GELU with analytic derivative."""

    def __init__(self):
        self._x = None

    def parameters(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = np.asarray(x)
        return _check_finite("gelu", 0.5 * self._x * (1.0 + erf(self._x * _INV_SQRT2)))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("gelu: backward called before forward")
        x = self._x
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        self._x = None
        return _check_finite("gelu", grad_out * (cdf + x * pdf))


class MLP2:
    """linear -> GELU -> linear, the two-layer block used throughout."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, name: str,
                 rng: np.random.Generator, zero_init_last: bool = False,
                 dtype=np.float32):
        self.fc1 = Linear(in_dim, hidden, f"{name}.fc1", rng, dtype=dtype)
        self.act = GELU()
        self.fc2 = Linear(hidden, out_dim, f"{name}.fc2", rng=None if zero_init_last else rng,
                          zero_init=zero_init_last, dtype=dtype)

    def parameters(self) -> list[Parameter]:
        return self.fc1.parameters() + self.fc2.parameters()

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.fc2.forward(self.act.forward(self.fc1.forward(x)))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return self.fc1.backward(self.act.backward(self.fc2.backward(grad_out)))


class AdamW:
    """Decoupled-weight-decay Adam over a list of Parameters.

    Decay multiplies the value by (1 - lr * weight_decay) before the
    bias-corrected moment update; it never touches the gradient. Gradients
    are zeroed at the end of each step.
    """

    def __init__(self, params: list[Parameter], lr: float = 1e-5,
                 weight_decay: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if not params:
            raise ConfigurationError("AdamW: empty parameter list")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if self.weight_decay != 0.0:
                p.value *= 1.0 - lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class CosineSchedule:
    """lr(step) = min_lr + 0.5 (base_lr - min_lr) (1 + cos(pi step / total))."""

    def __init__(self, base_lr: float, total_steps: int, min_lr: float = 0.0):
        if total_steps < 1:
            raise ConfigurationError("CosineSchedule: total_steps must be >= 1")
        self.base_lr = base_lr
        self.min_lr = min_lr
        self.total_steps = total_steps

    def lr(self, step: int) -> float:
        if step < 0 or step > self.total_steps:
            warnings.warn(
                f"cosine schedule step {step} outside [0, {self.total_steps}]; clamping",
                stacklevel=2)
            step = min(max(step, 0), self.total_steps)
        cos = math.cos(math.pi * step / self.total_steps)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + cos)

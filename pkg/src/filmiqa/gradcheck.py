"""Central finite-difference verification of every analytic gradient.

Each registered check builds a tiny module in float64, reduces its output
to a scalar through a fixed random projection, and compares the analytic
backward pass against (f(x+h) - f(x-h)) / 2h entry by entry, for every
parameter and every input entry. The error measure is

    |analytic - numeric| / max(1, |analytic|, |numeric|)

i.e. absolute below magnitude 1, relative above. Prompt inputs are checked
through the raw MLP (the generator renormalizes prompts, which is outside
the differentiated graph); max pooling is checked at points whose argmax
gap comfortably exceeds the step size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .film import FilmGenerator, Modulation
from .heads import BranchHeads, FusionHead
from .losses import LossConfig, mse_loss, pairwise_rank_loss, total_loss
from .model import QualityHead
from .nn import GELU, Linear, make_rng, stable_sigmoid
from .pooling import AvgPoolBins, MaxPoolBins, PooledFeatures

DEFAULT_H = 1e-4
DEFAULT_TOL = 1e-6
DEFAULT_SEEDS = 10


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.max_err < self.tol


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def central_diff(arrays: list[np.ndarray], f: Callable[[], float],
                 h: float = DEFAULT_H) -> list[np.ndarray]:
    """Numeric gradient of f() wrt every entry of every array, mutating the
    arrays in place (and restoring them)."""
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(grad)
    return grads


def _compare(arrays, f, analytic, h) -> float:
    numeric = central_diff(arrays, f, h)
    return max(_rel_err(a, n) for a, n in zip(analytic, numeric))


# Each builder returns (arrays, f, g): f() evaluates the scalar using the
# current array contents; g() returns analytic gradients in array order.

def _build_linear(seed):
    rng = make_rng(seed)
    layer = Linear(4, 3, "lin", rng, dtype=np.float64)
    x = rng.standard_normal((3, 4))
    r = rng.standard_normal((3, 3))
    arrays = [x, layer.W.value, layer.b.value]

    def f():
        return float((layer.forward(x) * r).sum())

    def g():
        layer.W.zero_grad()
        layer.b.zero_grad()
        layer.forward(x)
        gx = layer.backward(r)
        return [gx, layer.W.grad.copy(), layer.b.grad.copy()]

    return arrays, f, g


def _build_gelu(seed):
    rng = make_rng(seed)
    act = GELU()
    x = rng.standard_normal((2, 5))
    r = rng.standard_normal((2, 5))

    def f():
        return float((act.forward(x) * r).sum())

    def g():
        act.forward(x)
        return [act.backward(r)]

    return [x], f, g


def _build_film_generator(seed):
    # prompt input gradient is exercised through the raw MLP (no renorm)
    rng = make_rng(seed)
    gen = FilmGenerator(4, 3, rng, dtype=np.float64)
    for p in gen.parameters():  # zero-init last layer would hide fc1
        if not p.value.any():
            p.value[...] = 0.1 * rng.standard_normal(p.value.shape)
    z = rng.standard_normal((1, 4))
    r = rng.standard_normal((1, 6))
    arrays = [z] + [p.value for p in gen.parameters()]

    def f():
        return float((gen.mlp.forward(z) * r).sum())

    def g():
        for p in gen.parameters():
            p.zero_grad()
        gen.mlp.forward(z)
        gz = gen.mlp.backward(r)
        return [gz] + [p.grad.copy() for p in gen.parameters()]

    return arrays, f, g


def _build_modulate(seed):
    rng = make_rng(seed)
    mod = Modulation(strength=0.7)
    tokens = rng.standard_normal((2, 5, 3))
    gamma = rng.standard_normal(3)
    beta = rng.standard_normal(3)
    r = rng.standard_normal((2, 5, 3))

    def f():
        return float((mod.forward(tokens, gamma, beta) * r).sum())

    def g():
        mod.forward(tokens, gamma, beta)
        gt, gg, gb = mod.backward(r)
        return [gt, gg, gb]

    return [tokens, gamma, beta], f, g


def _build_film_chain(seed):
    # generate -> modulate with an exactly unit prompt held fixed
    rng = make_rng(seed)
    gen = FilmGenerator(4, 3, rng, dtype=np.float64)
    for p in gen.parameters():  # zero-init last layer would hide curvature
        if not p.value.any():
            p.value[...] = 0.1 * rng.standard_normal(p.value.shape)
    mod = Modulation(strength=1.0)
    prompt = np.zeros(4)
    prompt[0] = 1.0
    tokens = rng.standard_normal((2, 5, 3))
    r = rng.standard_normal((2, 5, 3))
    arrays = [tokens] + [p.value for p in gen.parameters()]

    def f():
        gamma, beta = gen.forward(prompt)
        return float((mod.forward(tokens, gamma, beta) * r).sum())

    def g():
        for p in gen.parameters():
            p.zero_grad()
        gamma, beta = gen.forward(prompt)
        mod.forward(tokens, gamma, beta)
        gt, gg, gb = mod.backward(r)
        gen.backward(gg, gb)
        return [gt] + [p.grad.copy() for p in gen.parameters()]

    return arrays, f, g


def _build_avg_pool(seed):
    rng = make_rng(seed)
    pool = AvgPoolBins(4)
    v = rng.standard_normal((2, 3, 9))
    r = rng.standard_normal((2, 12))

    def f():
        return float((pool.forward(v) * r).sum())

    def g():
        pool.forward(v)
        return [pool.backward(r)]

    return [v], f, g


def _build_max_pool(seed):
    rng = make_rng(seed)
    pool = MaxPoolBins(2)
    # well-separated values: argmax gap >= 0.3 >> 10h, so the subgradient
    # is the true gradient in the neighborhood probed by central_diff
    batch, channels, tokens = 2, 3, 8
    v = np.empty((batch, channels, tokens))
    for b in range(batch):
        for c in range(channels):
            v[b, c] = rng.permutation(tokens) * 0.5 + rng.uniform(0, 0.1, tokens)
    r = rng.standard_normal((batch, 2 * channels))

    def f():
        return float((pool.forward(v) * r).sum())

    def g():
        pool.forward(v)
        return [pool.backward(r)]

    return [v], f, g


def _build_heads(seed):
    rng = make_rng(seed)
    heads = BranchHeads(3, rng, hidden=6, dtype=np.float64)
    pooled = PooledFeatures(
        global_mean=rng.standard_normal((2, 3)),
        local_means=rng.standard_normal((2, 12)),
        texture_max=rng.standard_normal((2, 6)),
    )
    r = rng.standard_normal((2, 3))
    arrays = ([pooled.global_mean, pooled.local_means, pooled.texture_max]
              + [p.value for p in heads.parameters()])

    def f():
        return float((heads.forward(pooled) * r).sum())

    def g():
        for p in heads.parameters():
            p.zero_grad()
        heads.forward(pooled)
        gp = heads.backward(r)
        return ([gp.global_mean, gp.local_means, gp.texture_max]
                + [p.grad.copy() for p in heads.parameters()])

    return arrays, f, g


def _build_fusion(seed):
    rng = make_rng(seed)
    fusion = FusionHead(rng, hidden=5, tau_out=2.0, dtype=np.float64)
    for p in fusion.parameters():  # lift the zero-init final layer
        if not p.value.any():
            p.value[...] = 0.2 * rng.standard_normal(p.value.shape)
    sub = rng.standard_normal((3, 3))
    r = rng.standard_normal(3)
    arrays = [sub] + [p.value for p in fusion.parameters()]

    def f():
        return float(fusion.forward(sub) @ r)

    def g():
        for p in fusion.parameters():
            p.zero_grad()
        fusion.forward(sub)
        gs = fusion.backward(r)
        return [gs] + [p.grad.copy() for p in fusion.parameters()]

    return arrays, f, g


def _build_sigmoid_map(seed):
    rng = make_rng(seed)
    tau = 2.0
    logit = rng.standard_normal(4)
    r = rng.standard_normal(4)

    def f():
        return float((4.0 * stable_sigmoid(logit / tau)) @ r)

    def g():
        sig = stable_sigmoid(logit / tau)
        return [r * 4.0 * sig * (1.0 - sig) / tau]

    return [logit], f, g


def _build_rank_loss(seed):
    rng = make_rng(seed)
    pred = rng.standard_normal(6)
    target = np.array([0.0, 1.0, 2.0, 2.0, 3.0, 4.0])

    def f():
        return pairwise_rank_loss(pred, target, tau_rank=0.5)[0]

    def g():
        return [pairwise_rank_loss(pred, target, tau_rank=0.5)[1]]

    return [pred], f, g


def _build_mse_loss(seed):
    rng = make_rng(seed)
    pred = rng.standard_normal(5)
    target = rng.standard_normal(5)

    def f():
        return mse_loss(pred, target)[0]

    def g():
        return [mse_loss(pred, target)[1]]

    return [pred], f, g


def _build_total_loss(seed):
    rng = make_rng(seed)
    cfg = LossConfig(tau_rank=0.5, lambda_rank=1.0, lambda_mse=0.5)
    pred = rng.standard_normal(5)
    target = np.array([0.0, 1.0, 2.0, 3.0, 3.0])

    def f():
        return total_loss(pred, target, cfg)[0]

    def g():
        return [total_loss(pred, target, cfg)[1]]

    return [pred], f, g


def _build_full_stack(seed):
    # modulate -> pool -> heads -> fuse on B=2, P=8, d=4, through the loss
    rng = make_rng(seed)
    model = QualityHead(channels=4, prompt_dim=4, film_strength=1.0,
                        film_hidden=4, head_hidden=6, fusion_hidden=5,
                        seed=seed, dtype=np.float64)
    for p in model.parameters():  # lift zero-init layers off the origin
        if not p.value.any():
            p.value[...] = 0.1 * rng.standard_normal(p.value.shape)
    prompt = np.zeros(4)
    prompt[0] = 1.0
    tokens = np.empty((2, 8, 4))
    for b in range(2):
        for c in range(4):
            tokens[b, :, c] = rng.permutation(8) * 0.5 + rng.uniform(0, 0.1, 8)
    target = np.array([1.0, 3.0])
    cfg = LossConfig(tau_rank=0.5, lambda_rank=1.0, lambda_mse=0.5)
    arrays = [tokens] + [p.value for p in model.parameters()]

    def f():
        pred = model.forward(tokens, prompt)
        return total_loss(pred, target, cfg)[0]

    def g():
        model.zero_grad()
        pred = model.forward(tokens, prompt)
        _, grad = total_loss(pred, target, cfg)
        gt = model.backward(grad)
        return [gt] + [p.grad.copy() for p in model.parameters()]

    return arrays, f, g


ALL_CHECKS: dict[str, Callable] = {
    "linear": _build_linear,
    "gelu": _build_gelu,
    "film_generator": _build_film_generator,
    "modulate": _build_modulate,
    "film_chain": _build_film_chain,
    "avg_pool": _build_avg_pool,
    "max_pool": _build_max_pool,
    "heads": _build_heads,
    "fusion": _build_fusion,
    "sigmoid_map": _build_sigmoid_map,
    "rank_loss": _build_rank_loss,
    "mse_loss": _build_mse_loss,
    "total_loss": _build_total_loss,
    "full_stack": _build_full_stack,
}


def run_check(name: str, seeds: int = DEFAULT_SEEDS, h: float = DEFAULT_H,
              tol: float = DEFAULT_TOL) -> CheckResult:
    builder = ALL_CHECKS[name]
    worst = 0.0
    for seed in range(seeds):
        arrays, f, g = builder(seed)
        analytic = g()
        numeric = central_diff(arrays, f, h)
        worst = max(worst, max(_rel_err(a, n) for a, n in zip(analytic, numeric)))
    return CheckResult(name=name, max_err=worst, tol=tol, seeds=seeds)


def run_all(seeds: int = DEFAULT_SEEDS, h: float = DEFAULT_H,
            tol: float = DEFAULT_TOL) -> list[CheckResult]:
    return [run_check(name, seeds=seeds, h=h, tol=tol) for name in ALL_CHECKS]

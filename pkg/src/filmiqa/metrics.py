"""Evaluation metrics: Pearson, Spearman (average ranks on ties), Kendall
tau-b, their sum as the composite "overall" score, and MAE.

Degenerate inputs (zero variance, an all-tied side) raise
UndefinedMetricError instead of silently returning 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UndefinedMetricError


def _as_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.ndim != 1 or target.ndim != 1 or pred.shape != target.shape:
        raise ConfigurationError(
            f"metric inputs must be 1-D and same length, got {pred.shape} vs {target.shape}")
    if pred.shape[0] < 2:
        raise ConfigurationError("metrics need at least 2 samples")
    return pred, target


def pearson(pred, target) -> float:
    pred, target = _as_pair(pred, target)
    a = pred - pred.mean()
    b = target - target.mean()
    va = float(a @ a)
    vb = float(b @ b)
    if va == 0.0 or vb == 0.0:
        raise UndefinedMetricError("pearson undefined: zero variance input")
    return float((a @ b) / np.sqrt(va * vb))


def fractional_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    return ((starts + ends) / 2.0)[inverse]


def spearman(pred, target) -> float:
    pred, target = _as_pair(pred, target)
    try:
        return pearson(fractional_ranks(pred), fractional_ranks(target))
    except UndefinedMetricError:
        raise UndefinedMetricError("spearman undefined: constant input") from None


def kendall(pred, target) -> float:
    """tau-b: (C - D) / sqrt((C + D + T_p)(C + D + T_t)), where T_p counts
    pairs tied only in pred and T_t pairs tied only in target. Pairs tied
    on both sides enter neither numerator nor denominator."""
    pred, target = _as_pair(pred, target)
    n = pred.shape[0]
    iu = np.triu_indices(n, 1)
    dx = np.sign(pred[:, None] - pred[None, :])[iu]
    dy = np.sign(target[:, None] - target[None, :])[iu]
    prod = dx * dy
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    tied_pred_only = int(((dx == 0) & (dy != 0)).sum())
    tied_target_only = int(((dy == 0) & (dx != 0)).sum())
    lhs = concordant + discordant + tied_pred_only
    rhs = concordant + discordant + tied_target_only
    if lhs == 0 or rhs == 0:
        raise UndefinedMetricError("kendall undefined: one side entirely tied")
    return float((concordant - discordant) / np.sqrt(float(lhs) * float(rhs)))


@dataclass
class EvalReport:
    plcc: float
    srocc: float
    krocc: float
    overall: float
    mae: float
    n: int

    def as_lines(self) -> list[str]:
        return [
            f"plcc={self.plcc:.6f}",
            f"srocc={self.srocc:.6f}",
            f"krocc={self.krocc:.6f}",
            f"overall={self.overall:.6f}",
            f"mae={self.mae:.6f}",
            f"n={self.n}",
        ]


def evaluate(pred, target) -> EvalReport:
    """All three correlations, their sum, and MAE in one report."""
    pred, target = _as_pair(pred, target)
    plcc = pearson(pred, target)
    srocc = spearman(pred, target)
    krocc = kendall(pred, target)
    return EvalReport(
        plcc=plcc,
        srocc=srocc,
        krocc=krocc,
        overall=plcc + srocc + krocc,
        mae=float(np.abs(pred - target).mean()),
        n=int(pred.shape[0]),
    )

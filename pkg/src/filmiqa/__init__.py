"""Prompt-conditioned quality scoring for precomputed patch-token embeddings.

Pipeline: a frozen encoder (external) dumps per-image patch tokens and a
prompt embedding to disk; this package modulates the tokens with
prompt-derived scale/shift, pools them at three granularities, fuses the
branch scores, and regresses a bounded score in (0, 4), trained with a
pairwise ranking loss under cross-validation.
"""

from .data import (DatasetManifest, FoldSplit, ManifestRecord, ScoredSample,
                   generate_synthetic, make_folds, read_prompt_file,
                   read_token_file, write_prompt_file, write_token_file)
from .errors import ConfigurationError, FormatError, UndefinedMetricError
from .estimator import TokenQualityRegressor
from .film import FilmGenerator, Modulation
from .heads import BranchHeads, FusionHead
from .losses import LossConfig, mse_loss, pairwise_rank_loss, total_loss
from .metrics import EvalReport, evaluate, kendall, pearson, spearman
from .model import QualityHead
from .nn import AdamW, CosineSchedule, GELU, Linear, Parameter
from .pooling import PoolAll, PooledFeatures, avg_pool_bins, bin_edges, max_pool_bins
from .trainer import (Checkpoint, TrainConfig, predict, select_model, train_fold)

__version__ = "0.1.0"

__all__ = [
    "AdamW", "BranchHeads", "Checkpoint", "ConfigurationError",
    "CosineSchedule", "DatasetManifest", "EvalReport", "FilmGenerator",
    "FoldSplit", "FormatError", "FusionHead", "GELU", "Linear", "LossConfig",
    "ManifestRecord", "Modulation", "Parameter", "PoolAll", "PooledFeatures",
    "QualityHead", "ScoredSample", "TokenQualityRegressor", "TrainConfig",
    "UndefinedMetricError", "avg_pool_bins", "bin_edges", "evaluate",
    "generate_synthetic", "kendall", "make_folds", "max_pool_bins",
    "mse_loss", "pairwise_rank_loss", "pearson", "predict",
    "read_prompt_file", "read_token_file", "select_model", "spearman",
    "total_loss", "train_fold", "write_prompt_file", "write_token_file",
]

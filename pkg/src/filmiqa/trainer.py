"""Training loop, checkpointing, and cross-validated model selection.

One fold trains for a fixed number of epochs: seeded shuffle each epoch,
micro-batches whose loss is divided by the accumulation factor, one
optimizer step per group of accumulated micro-batches, cosine-annealed
learning rate over the full run of optimizer steps. After every epoch the
configured loss and MAE are computed on the validation split; the best
checkpoint by validation loss is retained, while the cross-fold winner is
picked by validation MAE.

Checkpoint file: "FQCK" | u32 version | u32 meta_len | meta JSON |
u32 n_tensors | per tensor (u32 name_len | name utf-8 | u32 rank |
u32 dims[rank] | float32 LE data), tensors sorted by name.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DatasetManifest, FoldSplit, ScoredSample, write_predictions
from .errors import ConfigurationError, FormatError
from .losses import LossConfig, total_loss
from .metrics import EvalReport, evaluate
from .model import QualityHead
from .nn import AdamW, CosineSchedule, make_rng

log = logging.getLogger(__name__)

FQCK_MAGIC = b"FQCK"
CHECKPOINT_VERSION = 1
EVAL_BATCH = 64


@dataclass
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 1e-4
    batch_size: int = 4
    accum_steps: int = 2
    epochs: int = 22
    folds: int = 5
    film_strength: float = 1.0
    tau_out: float = 2.0
    tau_rank: float = 0.5
    lambda_rank: float = 1.0
    lambda_mse: float = 0.0
    min_lr: float = 0.0
    head_hidden: int = 64
    fusion_hidden: int = 16
    film_hidden: int | None = None
    stratify: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "batch_size", "accum_steps", "epochs", "folds",
                     "tau_out", "tau_rank"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.weight_decay < 0 or self.min_lr < 0:
            raise ConfigurationError("weight_decay and min_lr must be >= 0")
        self.loss_config()  # validates the lambda pair

    def loss_config(self) -> LossConfig:
        return LossConfig(tau_rank=self.tau_rank, lambda_rank=self.lambda_rank,
                          lambda_mse=self.lambda_mse)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_mae: float
    lr: float


@dataclass
class History:
    epochs: list[EpochStats] = field(default_factory=list)
    step_lrs: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_mae", "lr"])
            for row in self.epochs:
                writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss),
                                 repr(row.val_mae), repr(row.lr)])


@dataclass
class Checkpoint:
    model_config: dict
    train_config: dict
    epoch: int
    val_loss: float
    val_mae: float
    fold_index: int
    values: dict[str, np.ndarray]

    def save(self, path) -> None:
        meta = {
            "model_config": self.model_config,
            "train_config": self.train_config,
            "epoch": self.epoch,
            "val_loss": self.val_loss,
            "val_mae": self.val_mae,
            "fold_index": self.fold_index,
        }
        meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(FQCK_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<I", len(meta_bytes)))
            fh.write(meta_bytes)
            fh.write(struct.pack("<I", len(self.values)))
            for name in sorted(self.values):
                arr = np.ascontiguousarray(self.values[name], dtype="<f4")
                name_bytes = name.encode("utf-8")
                fh.write(struct.pack("<I", len(name_bytes)))
                fh.write(name_bytes)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != FQCK_MAGIC:
            raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {FQCK_MAGIC!r}",
                              offset=0)
        (version,) = struct.unpack_from("<I", blob, 4)
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}", offset=4)
        (meta_len,) = struct.unpack_from("<I", blob, 8)
        offset = 12
        try:
            meta = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: bad metadata block: {exc}", offset=offset) from exc
        offset += meta_len
        (n_tensors,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        values = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            end = offset + count * 4
            if end > len(blob):
                raise FormatError(
                    f"{path}: tensor {name!r} truncated, expected {count * 4} bytes",
                    offset=offset)
            values[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(dims).copy()
            offset = end
        return cls(model_config=meta["model_config"], train_config=meta["train_config"],
                   epoch=meta["epoch"], val_loss=meta["val_loss"], val_mae=meta["val_mae"],
                   fold_index=meta.get("fold_index", 0), values=values)

    def build_model(self, film_strength: float | None = None) -> QualityHead:
        cfg = dict(self.model_config)
        if film_strength is not None:
            cfg["film_strength"] = film_strength
        model = QualityHead.from_config(cfg)
        model.load_values(self.values)
        return model


def inspect_checkpoint(path) -> dict:
    """Header summary: metadata plus tensor names and shapes."""
    ckpt = Checkpoint.load(path)
    return {
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "val_mae": ckpt.val_mae,
        "fold_index": ckpt.fold_index,
        "tensors": {name: list(arr.shape) for name, arr in sorted(ckpt.values.items())},
    }


def load_split(manifest: DatasetManifest, ids: list[str]):
    """Materialize (tokens, mos) arrays for a list of sample ids."""
    by_id = {r.sample_id: r for r in manifest.records}
    tokens = []
    mos = []
    for sid in ids:
        rec = by_id[sid]
        tokens.append(manifest.load_tokens(rec))
        mos.append(rec.mos)
    return np.stack(tokens), np.asarray(mos, dtype=np.float64)


def _predict_array(model: QualityHead, tokens: np.ndarray,
                   prompt: np.ndarray) -> np.ndarray:
    out = np.empty(tokens.shape[0], dtype=np.float64)
    for start in range(0, tokens.shape[0], EVAL_BATCH):
        stop = min(start + EVAL_BATCH, tokens.shape[0])
        out[start:stop] = model.predict(tokens[start:stop], prompt)
    return out


def _snapshot(model: QualityHead) -> dict[str, np.ndarray]:
    return {p.name: p.value.copy() for p in model.parameters()}


def train_fold(manifest: DatasetManifest, fold: FoldSplit, cfg: TrainConfig,
               prompt: np.ndarray) -> tuple[Checkpoint, History]:
    """Train one fold; returns (best checkpoint by validation loss, history).

    train_loss in the history is the mean of the per-micro-batch losses
    (before division by the accumulation factor).
    """
    if not fold.train_ids:
        raise ConfigurationError(f"fold {fold.fold_index}: empty train split")
    if not fold.val_ids:
        raise ConfigurationError(f"fold {fold.fold_index}: empty validation split")

    train_tokens, train_mos = load_split(manifest, fold.train_ids)
    val_tokens, val_mos = load_split(manifest, fold.val_ids)
    n_train = train_tokens.shape[0]
    channels = train_tokens.shape[2]

    model = QualityHead(channels=channels, prompt_dim=prompt.shape[0],
                        film_strength=cfg.film_strength, tau_out=cfg.tau_out,
                        film_hidden=cfg.film_hidden, head_hidden=cfg.head_hidden,
                        fusion_hidden=cfg.fusion_hidden, seed=cfg.seed)
    optimizer = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    loss_cfg = cfg.loss_config()

    micro_per_epoch = math.ceil(n_train / cfg.batch_size)
    steps_per_epoch = math.ceil(micro_per_epoch / cfg.accum_steps)
    schedule = CosineSchedule(cfg.lr, total_steps=cfg.epochs * steps_per_epoch,
                              min_lr=cfg.min_lr)

    rng = make_rng(cfg.seed)
    history = History()
    best: Checkpoint | None = None
    step_index = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        micro_losses = []
        pending = 0
        last_lr = schedule.lr(step_index)
        for micro, start in enumerate(range(0, n_train, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            pred = model.forward(train_tokens[idx], prompt)
            loss_value, grad = total_loss(pred, train_mos[idx], loss_cfg)
            if not math.isfinite(loss_value):
                raise FloatingPointError(
                    f"non-finite loss {loss_value} at epoch {epoch} micro-batch {micro}")
            micro_losses.append(loss_value)
            if not np.any(grad):
                log.debug("epoch %d micro %d: zero gradient (tied batch)", epoch, micro)
            model.backward(grad / cfg.accum_steps)
            pending += 1
            is_last = start + cfg.batch_size >= n_train
            if pending == cfg.accum_steps or is_last:
                last_lr = schedule.lr(step_index)
                optimizer.step(lr=last_lr)
                history.step_lrs.append(last_lr)
                step_index += 1
                pending = 0

        val_pred = _predict_array(model, val_tokens, prompt)
        val_loss, _ = total_loss(val_pred, val_mos, loss_cfg)
        val_mae = float(np.abs(val_pred - val_mos).mean())
        history.epochs.append(EpochStats(
            epoch=epoch, train_loss=float(np.mean(micro_losses)),
            val_loss=val_loss, val_mae=val_mae, lr=last_lr))
        if best is None or val_loss < best.val_loss:
            best = Checkpoint(model_config=model.config(),
                              train_config=asdict(cfg),
                              epoch=epoch, val_loss=val_loss, val_mae=val_mae,
                              fold_index=fold.fold_index, values=_snapshot(model))
    return best, history


def select_model(checkpoints: list[Checkpoint]) -> Checkpoint:
    """Lowest validation MAE wins; exact ties go to the lower fold index."""
    if not checkpoints:
        raise ConfigurationError("no checkpoints to select from")
    return min(checkpoints, key=lambda c: (c.val_mae, c.fold_index))


def predict(checkpoint: Checkpoint, manifest: DatasetManifest, prompt: np.ndarray,
            out_csv=None, film_strength: float | None = None) -> list[ScoredSample]:
    """Deterministic inference over every manifest sample."""
    model = checkpoint.build_model(film_strength=film_strength)
    if prompt.shape[0] != model.prompt_dim:
        raise ConfigurationError(
            f"prompt width {prompt.shape[0]} != checkpoint prompt_dim {model.prompt_dim}")
    tokens, mos = load_split(manifest, manifest.ids())
    if tokens.shape[2] != model.channels:
        raise ConfigurationError(
            f"token channels {tokens.shape[2]} != checkpoint channels {model.channels}")
    preds = _predict_array(model, tokens, prompt)
    scored = [ScoredSample(sid, float(m), float(p))
              for sid, m, p in zip(manifest.ids(), mos, preds)]
    if out_csv is not None:
        write_predictions(out_csv, scored)
    return scored


def evaluate_scored(scored: list[ScoredSample]) -> EvalReport:
    pred = np.array([s.pred for s in scored])
    target = np.array([s.mos for s in scored])
    return evaluate(pred, target)

"""Command-line entry point.

Exit codes: 0 success, 1 domain error (bad data, undefined metric,
numerical failure), 2 usage error. Every command echoes its resolved
configuration, so any run can be reproduced from its log.
"""

from __future__ import annotations

import functools
import json
import logging
import struct
import sys

import click

from . import data as dio
from . import gradcheck as gc
from .errors import ConfigurationError, FormatError, UndefinedMetricError
from .trainer import (Checkpoint, TrainConfig, evaluate_scored, inspect_checkpoint,
                      predict, select_model, train_fold)

DOMAIN_ERRORS = (ConfigurationError, FormatError, UndefinedMetricError,
                 FloatingPointError, OSError, KeyError)


def _echo_config(command: str, **kwargs) -> None:
    click.echo(f"[{command}] " + " ".join(f"{k}={v}" for k, v in sorted(kwargs.items())))


def domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DOMAIN_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


@click.group()
def main():
    """Prompt-conditioned quality scoring on precomputed patch embeddings."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


def train_options(fn):
    opts = [
        click.option("--lr", default=1e-5, show_default=True, help="AdamW learning rate."),
        click.option("--wd", default=1e-4, show_default=True, help="Decoupled weight decay."),
        click.option("--batch", default=4, show_default=True, help="Micro-batch size."),
        click.option("--accum", default=2, show_default=True,
                     help="Micro-batches accumulated per optimizer step."),
        click.option("--epochs", default=22, show_default=True),
        click.option("--folds", default=5, show_default=True),
        click.option("--film-strength", default=1.0, show_default=True),
        click.option("--tau-out", default=2.0, show_default=True),
        click.option("--tau-rank", default=0.5, show_default=True),
        click.option("--lambda-rank", default=1.0, show_default=True),
        click.option("--lambda-mse", default=0.0, show_default=True),
        click.option("--min-lr", default=0.0, show_default=True,
                     help="Cosine schedule floor."),
        click.option("--head-hidden", default=64, show_default=True),
        click.option("--fusion-hidden", default=16, show_default=True),
        click.option("--film-hidden", default=None, type=int,
                     help="Generator hidden width (default: prompt width)."),
        click.option("--stratify", is_flag=True, help="Label-stratified folds."),
        click.option("--seed", default=0, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_config(**kw) -> TrainConfig:
    return TrainConfig(
        lr=kw["lr"], weight_decay=kw["wd"], batch_size=kw["batch"],
        accum_steps=kw["accum"], epochs=kw["epochs"], folds=kw["folds"],
        film_strength=kw["film_strength"], tau_out=kw["tau_out"],
        tau_rank=kw["tau_rank"], lambda_rank=kw["lambda_rank"],
        lambda_mse=kw["lambda_mse"], min_lr=kw["min_lr"],
        head_hidden=kw["head_hidden"], fusion_hidden=kw["fusion_hidden"],
        film_hidden=kw["film_hidden"], stratify=kw["stratify"], seed=kw["seed"])


def _load_prompt(prompt_path, manifest_path):
    path = prompt_path if prompt_path else dio.default_prompt_path(manifest_path)
    return dio.read_prompt_file(path), path


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--prompt", "prompt_path", type=click.Path(exists=True, dir_okay=False),
              help="Prompt embedding file (default: prompt.temb beside the manifest).")
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Directory for checkpoints and histories.")
@train_options
@domain_errors
def train(manifest, prompt_path, out, **kw):
    """Cross-validated training; selects the fold with lowest val MAE."""
    from pathlib import Path

    cfg = _build_config(**kw)
    prompt, resolved_prompt = _load_prompt(prompt_path, manifest)
    _echo_config("train", manifest=manifest, prompt=resolved_prompt, out=out,
                 **{k: v for k, v in sorted(vars(cfg).items())})

    mf = dio.DatasetManifest.read_csv(manifest)
    num_tokens, channels = mf.dims()
    click.echo(f"dataset: n={len(mf)} P={num_tokens} d={channels} "
               f"d_t={prompt.shape[0]}")
    folds = dio.make_folds(mf.ids(), k=cfg.folds, seed=cfg.seed,
                           mos=mf.mos_by_id(), stratify=cfg.stratify)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoints = []
    for fold in folds:
        ckpt, history = train_fold(mf, fold, cfg, prompt)
        ckpt.save(out_dir / f"fold{fold.fold_index}.fqck")
        history.write_csv(out_dir / f"fold{fold.fold_index}_history.csv")
        checkpoints.append(ckpt)
        click.echo(f"fold {fold.fold_index}: best epoch {ckpt.epoch} "
                   f"val_loss={ckpt.val_loss:.6f} val_mae={ckpt.val_mae:.6f}")
    best = select_model(checkpoints)
    best.save(out_dir / "best.fqck")
    click.echo(f"selected fold {best.fold_index} (val_mae={best.val_mae:.6f}) "
               f"-> {out_dir / 'best.fqck'}")


@main.command(name="predict")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--prompt", "prompt_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Prediction CSV (id,prediction,target).")
@click.option("--film-strength", default=None, type=float,
              help="Override the checkpoint's modulation strength.")
@click.option("--seed", default=0, show_default=True)
@domain_errors
def predict_cmd(checkpoint, manifest, prompt_path, out, film_strength, seed):
    """Score every sample in a manifest with a trained checkpoint."""
    prompt, resolved_prompt = _load_prompt(prompt_path, manifest)
    _echo_config("predict", checkpoint=checkpoint, manifest=manifest,
                 prompt=resolved_prompt, out=out, film_strength=film_strength,
                 seed=seed)
    ckpt = Checkpoint.load(checkpoint)
    mf = dio.DatasetManifest.read_csv(manifest)
    scored = predict(ckpt, mf, prompt, out_csv=out, film_strength=film_strength)
    click.echo(f"wrote {len(scored)} predictions to {out}")


def _emit_report(report, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(vars(report), sort_keys=True))
    else:
        for line in report.as_lines():
            click.echo(line)


@main.command(name="eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--prompt", "prompt_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--pred-out", default=None, type=click.Path(dir_okay=False),
              help="Also write the prediction CSV.")
@click.option("--film-strength", default=None, type=float)
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
@click.option("--seed", default=0, show_default=True)
@domain_errors
def eval_cmd(checkpoint, manifest, prompt_path, pred_out, film_strength, as_json, seed):
    """Predict and report PLCC / SROCC / KROCC / overall / MAE."""
    prompt, resolved_prompt = _load_prompt(prompt_path, manifest)
    _echo_config("eval", checkpoint=checkpoint, manifest=manifest,
                 prompt=resolved_prompt, pred_out=pred_out,
                 film_strength=film_strength, seed=seed)
    ckpt = Checkpoint.load(checkpoint)
    mf = dio.DatasetManifest.read_csv(manifest)
    scored = predict(ckpt, mf, prompt, out_csv=pred_out, film_strength=film_strength)
    _emit_report(evaluate_scored(scored), as_json)


@main.command(name="metrics")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Prediction CSV (id,prediction,target).")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
@domain_errors
def metrics_cmd(pred, as_json):
    """Evaluate a prediction file."""
    _echo_config("metrics", pred=pred)
    scored = dio.read_predictions(pred)
    _emit_report(evaluate_scored(scored), as_json)


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--n", default=200, show_default=True)
@click.option("--p", "num_tokens", default=16, show_default=True)
@click.option("--d", "channels", default=8, show_default=True)
@click.option("--dt", "prompt_dim", default=8, show_default=True)
@click.option("--noise", default=0.1, show_default=True)
@click.option("--global-scale", default=1.7, show_default=True)
@click.option("--spike-min", default=2.0, show_default=True)
@click.option("--spike-max", default=7.0, show_default=True)
@click.option("--texture-scale", default=0.25, show_default=True)
@click.option("--seed", default=0, show_default=True)
@domain_errors
def synth(out, n, num_tokens, channels, prompt_dim, noise, global_scale,
          spike_min, spike_max, texture_scale, seed):
    """Generate a synthetic token dataset with known ground truth."""
    _echo_config("synth", out=out, n=n, p=num_tokens, d=channels, dt=prompt_dim,
                 noise=noise, global_scale=global_scale, spike_min=spike_min,
                 spike_max=spike_max, texture_scale=texture_scale, seed=seed)
    manifest_path = dio.generate_synthetic(
        out, n=n, num_tokens=num_tokens, channels=channels,
        prompt_dim=prompt_dim, noise_sigma=noise, seed=seed,
        global_scale=global_scale, spike_min=spike_min, spike_max=spike_max,
        texture_scale=texture_scale)
    click.echo(f"wrote {manifest_path}")


@main.command(name="gradcheck")
@click.option("--seeds", default=gc.DEFAULT_SEEDS, show_default=True)
@click.option("--tol", default=gc.DEFAULT_TOL, show_default=True)
@click.option("--step", "h", default=gc.DEFAULT_H, show_default=True,
              help="Central-difference step size.")
@domain_errors
def gradcheck_cmd(seeds, tol, h):
    """Finite-difference verification of every analytic gradient."""
    _echo_config("gradcheck", seeds=seeds, tol=tol, step=h)
    results = gc.run_all(seeds=seeds, h=h, tol=tol)
    failed = 0
    for res in results:
        status = "ok" if res.passed else "FAIL"
        click.echo(f"{status:4s} {res.name:16s} max_err={res.max_err:.3e} tol={res.tol:g}")
        failed += 0 if res.passed else 1
    if failed:
        click.echo(f"{failed}/{len(results)} gradient checks failed", err=True)
        sys.exit(1)
    click.echo(f"all {len(results)} gradient checks passed")


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@domain_errors
def inspect(path):
    """Dump the header of a PTOK, TEMB, or FQCK file."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == dio.PTOK_MAGIC:
        num_tokens, channels = dio.read_token_header(path)
        click.echo(f"type=ptok version={dio.FORMAT_VERSION} P={num_tokens} d={channels}")
    elif magic == dio.TEMB_MAGIC:
        width = dio.read_prompt_header(path)
        click.echo(f"type=temb version={dio.FORMAT_VERSION} d_t={width}")
    elif magic == struct.pack("<4s", b"FQCK"):
        info = inspect_checkpoint(path)
        click.echo("type=fqck")
        click.echo(json.dumps(info, indent=2, sort_keys=True))
    else:
        raise FormatError(f"{path}: unrecognized magic {magic!r}", offset=0)


if __name__ == "__main__":
    main()

"""On-disk formats and dataset plumbing.

Token file:   "PTOK" | u32 version | u32 P | u32 d | P*d float32 LE, token-major.
Prompt file:  "TEMB" | u32 version | u32 d_t | d_t float32 LE.
Manifest:     UTF-8 CSV, header ``id,mos,path`` (paths relative to the CSV).
Predictions:  UTF-8 CSV, header ``id,prediction,target``.

Embeddings live one file per sample so large datasets can be streamed
lazily. All integers and floats are little-endian regardless of platform.
A synthetic generator fabricates datasets whose true quality is a known
function of the tokens (global direction + a planted per-sample spike that
only max pooling can see), recorded in a sidecar for test introspection.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError
from .nn import make_rng

PTOK_MAGIC = b"PTOK"
TEMB_MAGIC = b"TEMB"
FORMAT_VERSION = 1

_TOKEN_HEADER = struct.Struct("<4sIII")
_PROMPT_HEADER = struct.Struct("<4sII")

MOS_MIN, MOS_MAX = 0.0, 4.0


def write_token_file(path, tokens: np.ndarray) -> None:
    tokens = np.asarray(tokens, dtype=np.float32)
    if tokens.ndim != 2:
        raise ConfigurationError(f"token file stores (P, d), got {tokens.shape}")
    num_tokens, channels = tokens.shape
    with open(path, "wb") as fh:
        fh.write(_TOKEN_HEADER.pack(PTOK_MAGIC, FORMAT_VERSION, num_tokens, channels))
        fh.write(np.ascontiguousarray(tokens, dtype="<f4").tobytes())


def _read_exact(fh, count: int, what: str, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(
            f"truncated {what}: expected {count} bytes, got {len(data)}",
            offset=offset)
    return data


def _parse_token_header(fh, path) -> tuple[int, int]:
    raw = _read_exact(fh, _TOKEN_HEADER.size, "token header", 0)
    magic, version, num_tokens, channels = _TOKEN_HEADER.unpack(raw)
    if magic != PTOK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {PTOK_MAGIC!r}", offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    return num_tokens, channels


def read_token_header(path) -> tuple[int, int]:
    """(P, d) from the header alone; does not load the payload."""
    with open(path, "rb") as fh:
        return _parse_token_header(fh, path)


def read_token_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        num_tokens, channels = _parse_token_header(fh, path)
        payload = fh.read()
    expected = num_tokens * channels * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}",
            offset=_TOKEN_HEADER.size)
    tokens = np.frombuffer(payload, dtype="<f4").reshape(num_tokens, channels).copy()
    if not np.all(np.isfinite(tokens)):
        raise FormatError(f"{path}: token payload contains NaN or Inf")
    return tokens


def write_prompt_file(path, vec: np.ndarray) -> None:
    vec = np.asarray(vec, dtype=np.float32)
    if vec.ndim != 1:
        raise ConfigurationError(f"prompt file stores a vector, got {vec.shape}")
    with open(path, "wb") as fh:
        fh.write(_PROMPT_HEADER.pack(TEMB_MAGIC, FORMAT_VERSION, vec.shape[0]))
        fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def read_prompt_header(path) -> int:
    with open(path, "rb") as fh:
        raw = _read_exact(fh, _PROMPT_HEADER.size, "prompt header", 0)
    magic, version, width = _PROMPT_HEADER.unpack(raw)
    if magic != TEMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {TEMB_MAGIC!r}", offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    return width


def read_prompt_file(path) -> np.ndarray:
    """Loads and L2-normalizes the stored prompt embedding."""
    width = read_prompt_header(path)
    with open(path, "rb") as fh:
        fh.seek(_PROMPT_HEADER.size)
        payload = fh.read()
    if len(payload) != width * 4:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {width * 4}",
            offset=_PROMPT_HEADER.size)
    vec = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    if not np.all(np.isfinite(vec)):
        raise FormatError(f"{path}: prompt embedding contains NaN or Inf")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise FormatError(f"{path}: prompt embedding is the zero vector")
    return vec / np.float32(norm)


@dataclass
class ManifestRecord:
    sample_id: str
    mos: float
    path: str  # relative to the manifest CSV


@dataclass
class ScoredSample:
    sample_id: str
    mos: float
    pred: float


class DatasetManifest:
    """Sample index backed by a CSV; token files are loaded lazily."""

    def __init__(self, records: list[ManifestRecord], root: Path):
        self.records = records
        self.root = Path(root)
        ids = [r.sample_id for r in records]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("manifest contains duplicate sample ids")
        for r in records:
            if not (MOS_MIN <= r.mos <= MOS_MAX):
                raise ConfigurationError(
                    f"{r.sample_id}: mos {r.mos} outside [{MOS_MIN}, {MOS_MAX}]")

    @classmethod
    def read_csv(cls, path) -> "DatasetManifest":
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["id", "mos", "path"]:
                raise FormatError(
                    f"{path}: manifest header must be id,mos,path, got {reader.fieldnames}")
            records = [ManifestRecord(row["id"], float(row["mos"]), row["path"])
                       for row in reader]
        if not records:
            raise FormatError(f"{path}: empty manifest")
        return cls(records, path.parent)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "mos", "path"])
            for r in self.records:
                writer.writerow([r.sample_id, repr(r.mos), r.path])

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.sample_id for r in self.records]

    def mos_by_id(self) -> dict[str, float]:
        return {r.sample_id: r.mos for r in self.records}

    def record(self, sample_id: str) -> ManifestRecord:
        for r in self.records:
            if r.sample_id == sample_id:
                return r
        raise ConfigurationError(f"unknown sample id {sample_id!r}")

    def load_tokens(self, record: ManifestRecord) -> np.ndarray:
        return read_token_file(self.root / record.path)

    def dims(self) -> tuple[int, int]:
        """(P, d) shared by every referenced file; header-only scan."""
        dims = None
        for r in self.records:
            file_dims = read_token_header(self.root / r.path)
            if dims is None:
                dims = file_dims
            elif file_dims != dims:
                raise ConfigurationError(
                    f"{r.path}: dims {file_dims} differ from {dims}")
        return dims


def default_prompt_path(manifest_path) -> Path:
    return Path(manifest_path).parent / "prompt.temb"


@dataclass
class FoldSplit:
    fold_index: int
    train_ids: list[str]
    val_ids: list[str]


def make_folds(ids: list[str], k: int = 5, seed: int = 0,
               mos: dict[str, float] | None = None,
               stratify: bool = False) -> list[FoldSplit]:
    """Seeded shuffle, then contiguous chunks as validation folds. Sizes are
    n//k with the remainder spread over the earliest folds. With
    ``stratify`` the shuffled ids are first ordered by label so each fold
    sees the full score range."""
    ids = list(ids)
    n = len(ids)
    if k < 1 or k > n:
        raise ConfigurationError(f"cannot make {k} folds from {n} ids")
    rng = make_rng(seed)
    order = list(rng.permutation(n))
    shuffled = [ids[i] for i in order]
    if stratify:
        if mos is None:
            raise ConfigurationError("stratify requires mos labels")
        shuffled.sort(key=lambda sid: mos[sid])
        # deal sorted ids round-robin so every fold spans the label range
        buckets: list[list[str]] = [[] for _ in range(k)]
        for pos, sid in enumerate(shuffled):
            buckets[pos % k].append(sid)
        folds = []
        for idx in range(k):
            val = buckets[idx]
            train = [sid for j, b in enumerate(buckets) if j != idx for sid in b]
            folds.append(FoldSplit(idx, train, val))
        return folds
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds = []
    start = 0
    for idx, size in enumerate(sizes):
        val = shuffled[start:start + size]
        train = shuffled[:start] + shuffled[start + size:]
        folds.append(FoldSplit(idx, train, val))
        start += size
    return folds


def write_predictions(path, scored: list[ScoredSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "prediction", "target"])
        for s in scored:
            writer.writerow([s.sample_id, repr(s.pred), repr(s.mos)])


def read_predictions(path) -> list[ScoredSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["id", "prediction", "target"]:
            raise FormatError(
                f"{path}: prediction header must be id,prediction,target, "
                f"got {reader.fieldnames}")
        return [ScoredSample(row["id"], float(row["target"]), float(row["prediction"]))
                for row in reader]


def generate_synthetic(out_dir, n: int, num_tokens: int, channels: int,
                       prompt_dim: int, noise_sigma: float, seed: int,
                       global_scale: float = 1.7, spike_min: float = 2.0,
                       spike_max: float = 7.0,
                       texture_scale: float = 0.25) -> Path:
    """Fabricate a dataset under ``out_dir``; returns the manifest path.

    Tokens are standard normal. A hidden unit direction w sets the global
    quality axis; each sample additionally gets one token spiked on a
    hidden channel (one-hot direction u) by r ~ U(spike_min, spike_max),
    so the spike rises above the per-bin noise ceiling and is visible only
    through max pooling. True quality is

        q = clip(2 + global_scale * sqrt(P) * (mean_token . w)
                   + texture_scale * (spiked_value - spike_midpoint), 0, 4)

    where spiked_value is the realized token entry after spiking (making q
    a deterministic function of the stored tokens) and mos =
    clip(q + N(0, noise_sigma^2), 0, 4). The label distribution is wide on
    purpose: a rank-trained model spreads its predictions over the whole
    score range, and centered labels would bound MAE away from the noise
    floor no matter how good the ordering. The full recipe (w, u, scales,
    per-sample q/spike data) lands in ``truth.json``.
    """
    if n < 1:
        raise ConfigurationError("need at least one sample")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)

    w = rng.standard_normal(channels)
    w /= np.linalg.norm(w)
    spike_channel = int(rng.integers(channels))
    u = np.zeros(channels)
    u[spike_channel] = 1.0
    spike_mid = 0.5 * (spike_min + spike_max)
    prompt = rng.standard_normal(prompt_dim)
    prompt /= np.linalg.norm(prompt)
    write_prompt_file(out_dir / "prompt.temb", prompt)

    records = []
    truth_samples = []
    width = len(str(max(n - 1, 1)))
    for i in range(n):
        tokens = rng.standard_normal((num_tokens, channels))
        spike_token = int(rng.integers(num_tokens))
        spike_strength = float(rng.uniform(spike_min, spike_max))
        tokens[spike_token] += spike_strength * u
        spiked_value = float(tokens[spike_token, spike_channel])
        global_term = global_scale * np.sqrt(num_tokens) * float(tokens.mean(axis=0) @ w)
        texture_term = texture_scale * (spiked_value - spike_mid)
        q = float(np.clip(2.0 + global_term + texture_term, MOS_MIN, MOS_MAX))
        noise = float(rng.normal(0.0, noise_sigma)) if noise_sigma > 0 else 0.0
        mos = float(np.clip(q + noise, MOS_MIN, MOS_MAX))

        sample_id = f"sample_{i:0{width}d}"
        rel_path = f"{sample_id}.ptok"
        write_token_file(out_dir / rel_path, tokens.astype(np.float32))
        records.append(ManifestRecord(sample_id, mos, rel_path))
        truth_samples.append({
            "id": sample_id, "q": q, "mos": mos,
            "spike_token": spike_token, "spike_strength": spike_strength,
            "spiked_value": spiked_value,
        })

    manifest = DatasetManifest(records, out_dir)
    manifest_path = out_dir / "manifest.csv"
    manifest.write_csv(manifest_path)
    with open(out_dir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump({
            "seed": seed, "n": n, "num_tokens": num_tokens,
            "channels": channels, "prompt_dim": prompt_dim,
            "noise_sigma": noise_sigma, "global_scale": global_scale,
            "spike_min": spike_min, "spike_max": spike_max,
            "texture_scale": texture_scale, "spike_channel": spike_channel,
            "w": w.tolist(), "u": u.tolist(), "samples": truth_samples,
        }, fh, indent=2, sort_keys=True)
    return manifest_path

"""Synthetic dataset generation and JSONL/CSV dataset ingestion."""

from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import LEVELS, N_LEVELS

SPLITS = ("train", "val", "test")

# Geometry of the synthetic feature space. The ordinal signal is a latent
# difficulty embedded along one direction; per-level cluster centers add
# non-ordinal structure the regressor must also absorb.
LATENT_SCALE = 4.0
FEATURE_NOISE_SD = 0.5
CENTER_SD = 0.5


@dataclass(frozen=True)
class Split:
    """One dataset split: ids, feature matrix, and gold levels."""

    ids: tuple[str, ...]
    features: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=np.int64))
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n = self.features.shape[0]
        if n == 0:
            raise ValueError("split must be non-empty")
        if len(self.ids) != n or self.levels.shape != (n,):
            raise ValueError("ids, features, and levels must have matching lengths")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        if not np.isin(self.levels, LEVELS).all():
            raise ValueError(f"levels must lie in {LEVELS}")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Train/val/test splits with a shared feature dimension.

    `level_distribution` holds the empirical proportion of each level in the
    training split; gold train labels stay hidden from the learner until the
    acquisition loop reveals them.
    """

    train: Split
    val: Split
    test: Split
    dim: int = field(init=False)
    level_distribution: np.ndarray = field(init=False)

    def __post_init__(self):
        dims = {s.features.shape[1] for s in (self.train, self.val, self.test)}
        if len(dims) != 1:
            raise ValueError(f"splits disagree on feature dimension: {sorted(dims)}")
        ids = [i for s in (self.train, self.val, self.test) for i in s.ids]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate example ids across splits")
        counts = np.bincount(self.train.levels, minlength=N_LEVELS).astype(np.float64)
        object.__setattr__(self, "dim", int(dims.pop()))
        object.__setattr__(self, "level_distribution", counts / counts.sum())


@dataclass(frozen=True)
class SyntheticConfig:
    """Configuration of the synthetic imbalanced-difficulty generator."""

    n_train: int = 8000
    n_val: int = 500
    n_test: int = 2000
    dim: int = 16
    level_proportions: tuple[float, float, float] = (0.25, 0.62, 0.13)
    noise_sd: float = 0.3
    hardness_skew: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) <= 0:
            raise ValueError("all split sizes must be positive")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        props = np.asarray(self.level_proportions, dtype=np.float64)
        if props.shape != (N_LEVELS,) or (props <= 0).any():
            raise ValueError("level_proportions must be 3 positive values")
        if abs(props.sum() - 1.0) > 1e-9:
            raise ValueError("level_proportions must sum to 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.hardness_skew < 0:
            raise ValueError("hardness_skew must be non-negative")


def sample_examples(rng, n, config, centers, direction):
    """Draw `n` examples; returns (features, levels, latents).

    Each example's latent difficulty is its level plus Gaussian noise; it is
    embedded linearly along `direction` on top of the level's cluster center.
    Level-2 examples get feature noise inflated by (1 + hardness_skew).
    """
    props = np.asarray(config.level_proportions, dtype=np.float64)
    levels = rng.choice(N_LEVELS, size=n, p=props)
    latents = levels + rng.normal(0.0, config.noise_sd, size=n)
    noise_sd = np.where(levels == 2, FEATURE_NOISE_SD * (1.0 + config.hardness_skew),
                        FEATURE_NOISE_SD)
    noise = rng.normal(0.0, 1.0, size=(n, config.dim)) * noise_sd[:, None]
    features = centers[levels] + LATENT_SCALE * latents[:, None] * direction + noise
    return features, levels, latents


def synthetic_geometry(config: SyntheticConfig):
    """Cluster centers and latent embedding direction for a generator seed."""
    rng = np.random.default_rng(config.seed)
    centers = rng.normal(0.0, CENTER_SD, size=(N_LEVELS, config.dim))
    direction = rng.normal(0.0, 1.0, size=config.dim)
    direction /= np.linalg.norm(direction)
    return rng, centers, direction


def gen_synthetic(config: SyntheticConfig) -> Dataset:
    """Generate an imbalanced synthetic dataset with hidden gold levels."""
    rng, centers, direction = synthetic_geometry(config)
    splits = {}
    for name, n in (("train", config.n_train), ("val", config.n_val), ("test", config.n_test)):
        features, levels, _ = sample_examples(rng, n, config, centers, direction)
        ids = tuple(f"{name}-{i:06d}" for i in range(n))
        splits[name] = Split(ids=ids, features=features, levels=levels)
    return Dataset(train=splits["train"], val=splits["val"], test=splits["test"])


def _open_text(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        if format not in ("jsonl", "csv"):
            raise ValueError(f"unknown dataset format {format!r}")
        return format
    suffixes = [s for s in path.suffixes if s != ".gz"]
    if suffixes and suffixes[-1] in (".jsonl", ".csv"):
        return suffixes[-1][1:]
    raise ValueError(f"cannot infer dataset format from {path.name!r}")


def save_dataset(dataset: Dataset, path, format: str | None = None) -> None:
    """Write a dataset to JSONL or CSV (gzip-compressed for a .gz suffix)."""
    path = Path(path)
    fmt = _infer_format(path, format)
    with _open_text(path, "w") as fh:
        if fmt == "jsonl":
            for split_name in SPLITS:
                split = getattr(dataset, split_name)
                for i in range(len(split)):
                    record = {
                        "id": split.ids[i],
                        "split": split_name,
                        "level": int(split.levels[i]),
                        "features": [float(v) for v in split.features[i]],
                    }
                    fh.write(json.dumps(record) + "\n")
        else:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "split", "level"] + [f"f{j}" for j in range(dataset.dim)])
            for split_name in SPLITS:
                split = getattr(dataset, split_name)
                for i in range(len(split)):
                    writer.writerow([split.ids[i], split_name, int(split.levels[i])]
                                    + [repr(float(v)) for v in split.features[i]])


def _parse_record(record: dict, lineno: int, dim: int | None):
    for key in ("id", "split", "level", "features"):
        if key not in record:
            raise ValueError(f"line {lineno}: missing field {key!r}")
    split = record["split"]
    if split not in SPLITS:
        raise ValueError(f"line {lineno}: unknown split {split!r}")
    level = record["level"]
    if not isinstance(level, int) or level not in LEVELS:
        raise ValueError(f"line {lineno}: level {level!r} outside {LEVELS}")
    features = np.asarray(record["features"], dtype=np.float64)
    if features.ndim != 1 or features.size == 0:
        raise ValueError(f"line {lineno}: features must be a non-empty vector")
    if dim is not None and features.size != dim:
        raise ValueError(f"line {lineno}: feature length {features.size} != {dim}")
    if not np.isfinite(features).all():
        raise ValueError(f"line {lineno}: non-finite feature value")
    return str(record["id"]), split, level, features


def load_dataset(path, format: str | None = None) -> Dataset:
    """Load a dataset from JSONL or CSV; parse errors name the offending line."""
    path = Path(path)
    fmt = _infer_format(path, format)
    buckets = {name: {"ids": [], "levels": [], "features": []} for name in SPLITS}
    dim = None
    with _open_text(path, "r") as fh:
        if fmt == "jsonl":
            rows = _iter_jsonl(fh)
        else:
            rows = _iter_csv(fh)
        for lineno, record in rows:
            ex_id, split, level, features = _parse_record(record, lineno, dim)
            dim = features.size
            buckets[split]["ids"].append(ex_id)
            buckets[split]["levels"].append(level)
            buckets[split]["features"].append(features)
    for name in SPLITS:
        if not buckets[name]["ids"]:
            raise ValueError(f"dataset has an empty {name!r} split")
    splits = {
        name: Split(
            ids=tuple(b["ids"]),
            features=np.vstack(b["features"]),
            levels=np.asarray(b["levels"], dtype=np.int64),
        )
        for name, b in buckets.items()
    }
    return Dataset(train=splits["train"], val=splits["val"], test=splits["test"])


def _iter_jsonl(fh: io.TextIOBase):
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise ValueError(f"line {lineno}: expected a JSON object")
        yield lineno, record


def _iter_csv(fh: io.TextIOBase):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("line 1: empty CSV file") from None
    if header[:3] != ["id", "split", "level"]:
        raise ValueError("line 1: header must start with id,split,level")
    feature_cols = header[3:]
    if not feature_cols:
        raise ValueError("line 1: header declares no feature columns")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            level = int(row[2])
        except ValueError:
            raise ValueError(f"line {lineno}: level {row[2]!r} is not an integer") from None
        try:
            features = [float(v) for v in row[3:]]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric feature value") from None
        yield lineno, {"id": row[0], "split": row[1], "level": level, "features": features}

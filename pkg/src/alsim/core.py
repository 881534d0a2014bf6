"""Shared domain types, level discretization, and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LEVELS = (0, 1, 2)
N_LEVELS = len(LEVELS)


def discretize(y: float) -> int:
    """Map a continuous difficulty prediction to the closest level in {0, 1, 2}.

    Thresholds sit at the midpoints 0.5 and 1.5; a value exactly on a
    threshold resolves upward. Values outside [0, 2] clamp to the
    nearest extreme level.
    """
    if not math.isfinite(y):
        raise ValueError(f"cannot discretize non-finite value {y!r}")
    if y < 0.5:
        return 0
    if y < 1.5:
        return 1
    return 2


def discretize_array(y: np.ndarray) -> np.ndarray:
    """Vectorized :func:`discretize` over a 1-D array of predictions."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("cannot discretize non-finite values")
    out = np.ones(y.shape, dtype=np.int64)
    out[y < 0.5] = 0
    out[y >= 1.5] = 2
    return out


def discrete_rmse(preds, golds) -> float:
    """Root mean squared error between integer level predictions and gold levels."""
    preds = np.asarray(preds, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if preds.shape != golds.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {golds.shape}")
    if preds.size == 0:
        raise ValueError("cannot compute RMSE of empty prediction list")
    diff = preds - golds
    return float(np.sqrt(np.mean(diff.astype(np.float64) ** 2)))


def per_level_rmse(preds, golds) -> np.ndarray:
    """Discrete RMSE restricted to examples of each gold level.

    Returns a 3-vector; levels absent from `golds` are reported as NaN
    rather than 0 so a missing level never reads as a perfect score.
    """
    preds = np.asarray(preds, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if preds.shape != golds.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {golds.shape}")
    if preds.size == 0:
        raise ValueError("cannot compute RMSE of empty prediction list")
    out = np.full(N_LEVELS, np.nan)
    for level in LEVELS:
        mask = golds == level
        if mask.any():
            out[level] = discrete_rmse(preds[mask], golds[mask])
    return out


@dataclass
class LabelState:
    """Partition of training indices into a labeled set and an unlabeled pool.

    `labeled` preserves acquisition order; `pool` is kept sorted so pool
    subsampling is deterministic given an RNG state. Gold labels appear in
    `revealed_labels` only once an index has been acquired.
    """

    labeled: list[int]
    pool: np.ndarray
    revealed_labels: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.pool = np.asarray(self.pool, dtype=np.int64)
        self.pool.sort()

    @property
    def labeled_size(self) -> int:
        return len(self.labeled)

    @property
    def pool_size(self) -> int:
        return int(self.pool.size)

    def mark_labeled(self, indices, levels) -> None:
        """Move pool indices to the labeled set, recording their revealed levels."""
        indices = np.asarray(indices, dtype=np.int64)
        levels = np.asarray(levels, dtype=np.int64)
        if indices.size != levels.size:
            raise ValueError("indices and levels must have equal length")
        pool_set = set(self.pool.tolist())
        for idx, level in zip(indices.tolist(), levels.tolist()):
            if idx not in pool_set:
                raise ValueError(f"index {idx} is not in the unlabeled pool")
            if level not in LEVELS:
                raise ValueError(f"level {level} outside {LEVELS}")
            self.labeled.append(idx)
            self.revealed_labels[idx] = level
        self.pool = np.setdiff1d(self.pool, indices, assume_unique=False)

    def validate(self, n_train: int) -> None:
        """Check the partition invariant against the training-set size."""
        labeled = set(self.labeled)
        pool = set(self.pool.tolist())
        if len(labeled) != len(self.labeled):
            raise ValueError("labeled set contains duplicate indices")
        if labeled & pool:
            raise ValueError("labeled and pool sets overlap")
        if labeled | pool != set(range(n_train)):
            raise ValueError("labeled and pool do not partition the training indices")
        if set(self.revealed_labels) != labeled:
            raise ValueError("revealed labels must cover exactly the labeled set")


def level_distribution(state: LabelState) -> np.ndarray:
    """Proportions of revealed labels per level over the labeled set."""
    if not state.labeled:
        raise ValueError("labeled set is empty")
    counts = np.zeros(N_LEVELS)
    for idx in state.labeled:
        counts[state.revealed_labels[idx]] += 1
    return counts / counts.sum()


@dataclass
class MetricsRow:
    """Per-round evaluation record of one active-learning run."""

    round: int
    labeled_size: int
    discrete_rmse: float
    per_level_rmse: np.ndarray
    labeled_level_dist: np.ndarray
    wall_time_s: float

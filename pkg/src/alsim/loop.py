"""Active-learning experiment loop, baselines, and run aggregation.

One run proceeds as: stratified initial labeling, then repeated rounds of
acquire -> reveal gold labels -> reinitialize weights -> retrain -> evaluate
on the test split, until the labeled budget is exhausted. Metrics rows are
recorded every round, including round 0 (initial set only).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .acquisition import AcquisitionConfig, acquire_scored
from .core import (LEVELS, N_LEVELS, LabelState, MetricsRow, discretize_array,
                   discrete_rmse, level_distribution, per_level_rmse)
from .data import Dataset
from .model import Regressor, RegressorConfig

BASELINES = ("random", "majority", "supervised")

# Substream labels for deriving independent RNG streams from one run seed.
_INIT_STREAM = 0
_MODEL_STREAM = 1
_ACQ_STREAM = 2
_BASELINE_STREAM = 3

CURVE_COLUMNS = ("round", "labeled_size", "discrete_rmse",
                 "rmse_l0", "rmse_l1", "rmse_l2",
                 "dist_l0", "dist_l1", "dist_l2")


@dataclass(frozen=True)
class LoopConfig:
    initial_labeled: int
    final_labeled: int
    acquisition: AcquisitionConfig
    regressor: RegressorConfig
    runs: int = 5
    base_seed: int = 0

    def __post_init__(self):
        if self.initial_labeled < 3:
            raise ValueError("initial_labeled must be at least 3")
        if self.final_labeled < self.initial_labeled:
            raise ValueError("final_labeled must be >= initial_labeled")
        if (self.final_labeled - self.initial_labeled) % self.acquisition.batch_k != 0:
            raise ValueError("final_labeled - initial_labeled must be divisible by batch_k")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")


@dataclass
class LearningCurve:
    """Metrics rows of one run, ordered by labeled-set size."""

    rows: list[MetricsRow]
    strategy: str
    run_seed: int
    predictions: list[np.ndarray] | None = None

    def labeled_sizes(self) -> np.ndarray:
        return np.array([row.labeled_size for row in self.rows], dtype=np.int64)

    def rmse_values(self) -> np.ndarray:
        return np.array([row.discrete_rmse for row in self.rows])


@dataclass
class AggregateCurve:
    """Per-round mean and standard error across runs of one strategy."""

    strategy: str
    n_runs: int
    rounds: np.ndarray
    sizes: np.ndarray
    mean_rmse: np.ndarray
    se_rmse: np.ndarray
    mean_per_level: np.ndarray
    se_per_level: np.ndarray
    mean_dist: np.ndarray
    se_dist: np.ndarray

    def labeled_sizes(self) -> np.ndarray:
        return self.sizes

    def rmse_values(self) -> np.ndarray:
        return self.mean_rmse


def _stream(base_seed: int, label: int):
    return np.random.default_rng(np.random.SeedSequence([base_seed, label]))


def _stream_seed(base_seed: int, label: int) -> int:
    return int(np.random.SeedSequence([base_seed, label]).generate_state(1)[0])


def run_seeds(config: LoopConfig) -> list[int]:
    """Per-run seeds of the experiment grid (shared across strategies)."""
    return [config.base_seed + i for i in range(config.runs)]


def largest_remainder(n: int, counts) -> np.ndarray:
    """Apportion n into integer quotas proportional to counts.

    Floors the exact quotas, then hands the leftover units to the largest
    fractional remainders; remainder ties resolve toward the lower level.
    """
    counts = np.asarray(counts, dtype=np.float64)
    quotas = n * counts / counts.sum()
    base = np.floor(quotas).astype(np.int64)
    leftover = n - int(base.sum())
    order = np.lexsort((np.arange(counts.size), -(quotas - base)))
    base[order[:leftover]] += 1
    return base


def init_labeled_set(dataset: Dataset, n: int, rng) -> LabelState:
    """Stratified initial labeling following the training-set level distribution."""
    train_levels = dataset.train.levels
    n_train = len(dataset.train)
    if n > n_train:
        raise ValueError(f"cannot label {n} of {n_train} training examples")
    level_counts = np.bincount(train_levels, minlength=N_LEVELS)
    quotas = largest_remainder(n, level_counts)
    labeled = []
    for level in LEVELS:
        if quotas[level] > level_counts[level]:
            raise ValueError(
                f"level {level} has {level_counts[level]} training examples, "
                f"quota is {quotas[level]}"
            )
        candidates = np.flatnonzero(train_levels == level)
        labeled.append(rng.choice(candidates, size=quotas[level], replace=False))
    labeled = np.concatenate(labeled)
    pool = np.setdiff1d(np.arange(n_train), labeled)
    state = LabelState(labeled=labeled.tolist(), pool=pool)
    for idx in state.labeled:
        state.revealed_labels[idx] = int(train_levels[idx])
    state.validate(n_train)
    return state


def _resolve_regressor(config: RegressorConfig, dim: int, seed: int) -> RegressorConfig:
    if config.input_dim is None:
        return replace(config, input_dim=dim, seed=seed)
    if config.input_dim != dim:
        raise ValueError(f"regressor input_dim {config.input_dim} != dataset dim {dim}")
    return replace(config, seed=seed)


def _fit(model: Regressor, dataset: Dataset, state: LabelState):
    features = dataset.train.features[state.labeled]
    targets = np.array([state.revealed_labels[i] for i in state.labeled], dtype=np.float64)
    return model.train(features, targets,
                       dataset.val.features, dataset.val.levels.astype(np.float64))


def _evaluate(model, dataset, state, round_index, t0, predictions) -> MetricsRow:
    continuous = model.predict(dataset.test.features)
    preds = discretize_array(continuous)
    if predictions is not None:
        predictions.append(preds)
    golds = dataset.test.levels
    return MetricsRow(
        round=round_index,
        labeled_size=state.labeled_size,
        discrete_rmse=discrete_rmse(preds, golds),
        per_level_rmse=per_level_rmse(preds, golds),
        labeled_level_dist=level_distribution(state),
        wall_time_s=time.perf_counter() - t0,
    )


def run_al(dataset: Dataset, config: LoopConfig, acquisition_log: list | None = None,
           keep_predictions: bool = False) -> LearningCurve:
    """Execute one active-learning run; `config.base_seed` is the run seed.

    When `acquisition_log` is a list, one record per acquisition round is
    appended: round, strategy, chosen train indices, their variance scores
    (None for uniform), and their revealed levels.
    """
    acq = config.acquisition
    if config.final_labeled > len(dataset.train):
        raise ValueError("final_labeled exceeds training-set size")
    n_rounds = (config.final_labeled - config.initial_labeled) // acq.batch_k

    init_rng = _stream(config.base_seed, _INIT_STREAM)
    acq_rng = _stream(config.base_seed, _ACQ_STREAM)
    model = Regressor(_resolve_regressor(config.regressor, dataset.dim,
                                         _stream_seed(config.base_seed, _MODEL_STREAM)))

    predictions = [] if keep_predictions else None
    t0 = time.perf_counter()
    state = init_labeled_set(dataset, config.initial_labeled, init_rng)
    _fit(model, dataset, state)
    rows = [_evaluate(model, dataset, state, 0, t0, predictions)]

    train_levels = dataset.train.levels
    for round_index in range(1, n_rounds + 1):
        t0 = time.perf_counter()
        result = acquire_scored(model, dataset.train.features, state, acq, acq_rng)
        gold = train_levels[result.chosen]
        state.mark_labeled(result.chosen, gold)
        state.validate(len(dataset.train))
        if acquisition_log is not None:
            scores = result.chosen_scores()
            acquisition_log.append({
                "round": round_index,
                "strategy": acq.strategy,
                "chosen": [int(i) for i in result.chosen],
                "s_var": None if scores is None else [float(s) for s in scores],
                "levels": [int(g) for g in gold],
            })
        model.reinitialize()
        _fit(model, dataset, state)
        rows.append(_evaluate(model, dataset, state, round_index, t0, predictions))
    return LearningCurve(rows=rows, strategy=acq.strategy, run_seed=config.base_seed,
                         predictions=predictions)


def run_baseline(dataset: Dataset, which: str, config: LoopConfig) -> MetricsRow:
    """Reference points: random/majority lower bounds, fully supervised upper bound."""
    if which not in BASELINES:
        raise ValueError(f"unknown baseline {which!r}; valid baselines: {', '.join(BASELINES)}")
    t0 = time.perf_counter()
    golds = dataset.test.levels
    if which == "random":
        rng = _stream(config.base_seed, _BASELINE_STREAM)
        preds = rng.integers(0, N_LEVELS, size=len(dataset.test))
        labeled_size = 0
        dist = np.full(N_LEVELS, np.nan)
    elif which == "majority":
        preds = np.ones(len(dataset.test), dtype=np.int64)
        labeled_size = 0
        dist = np.full(N_LEVELS, np.nan)
    else:
        model = Regressor(_resolve_regressor(config.regressor, dataset.dim,
                                             _stream_seed(config.base_seed, _MODEL_STREAM)))
        model.train(dataset.train.features, dataset.train.levels.astype(np.float64),
                    dataset.val.features, dataset.val.levels.astype(np.float64))
        preds = discretize_array(model.predict(dataset.test.features))
        labeled_size = len(dataset.train)
        dist = dataset.level_distribution.copy()
    return MetricsRow(
        round=0,
        labeled_size=labeled_size,
        discrete_rmse=discrete_rmse(preds, golds),
        per_level_rmse=per_level_rmse(preds, golds),
        labeled_level_dist=dist,
        wall_time_s=time.perf_counter() - t0,
    )


def active_gain(curve, uniform_curve) -> np.ndarray:
    """Per-round discrete-RMSE advantage over uniform acquisition (positive = better)."""
    sizes = curve.labeled_sizes()
    uniform_sizes = uniform_curve.labeled_sizes()
    if sizes.shape != uniform_sizes.shape or (sizes != uniform_sizes).any():
        raise ValueError("curves have mismatched labeled sizes")
    return uniform_curve.rmse_values() - curve.rmse_values()


def _nan_mean(stack: np.ndarray) -> np.ndarray:
    """Mean along axis 0, ignoring NaNs; NaN where no values at all."""
    counts = np.sum(~np.isnan(stack), axis=0)
    out = np.full(stack.shape[1:], np.nan)
    ok = counts > 0
    sums = np.nansum(stack, axis=0)
    out[ok] = sums[ok] / counts[ok]
    return out


def _nan_se(stack: np.ndarray) -> np.ndarray:
    """Standard error along axis 0, ignoring NaNs; NaN where fewer than 2 values."""
    counts = np.sum(~np.isnan(stack), axis=0)
    out = np.full(stack.shape[1:], np.nan)
    ok = counts >= 2
    if ok.any():
        var = np.nansum((stack - _nan_mean(stack)) ** 2, axis=0)
        out[ok] = np.sqrt(var[ok] / (counts[ok] - 1)) / np.sqrt(counts[ok])
    return out


def aggregate_runs(curves: list[LearningCurve]) -> AggregateCurve:
    """Mean and standard error per round across runs of one strategy."""
    if len(curves) < 2:
        raise ValueError("aggregation needs at least 2 curves")
    strategies = {c.strategy for c in curves}
    if len(strategies) != 1:
        raise ValueError(f"cannot aggregate across strategies: {sorted(strategies)}")
    sizes = curves[0].labeled_sizes()
    for curve in curves[1:]:
        other = curve.labeled_sizes()
        if other.shape != sizes.shape or (other != sizes).any():
            raise ValueError("curves have mismatched labeled sizes")
    rmse = np.stack([c.rmse_values() for c in curves])
    per_level = np.stack([[row.per_level_rmse for row in c.rows] for c in curves])
    dist = np.stack([[row.labeled_level_dist for row in c.rows] for c in curves])
    n = len(curves)
    return AggregateCurve(
        strategy=curves[0].strategy,
        n_runs=n,
        rounds=np.array([row.round for row in curves[0].rows], dtype=np.int64),
        sizes=sizes,
        mean_rmse=rmse.mean(axis=0),
        se_rmse=rmse.std(axis=0, ddof=1) / np.sqrt(n),
        mean_per_level=_nan_mean(per_level),
        se_per_level=_nan_se(per_level),
        mean_dist=dist.mean(axis=0),
        se_dist=_nan_se(dist),
    )


# -- CSV serialization -------------------------------------------------------
#
# Per-run metrics CSVs must be byte-identical across executions of the same
# config and seed, so volatile wall-clock timings live in a sidecar file.


def _fmt(value) -> str:
    return repr(float(value))


def write_curve_csv(curve: LearningCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for row in curve.rows:
            writer.writerow([row.round, row.labeled_size, _fmt(row.discrete_rmse)]
                            + [_fmt(v) for v in row.per_level_rmse]
                            + [_fmt(v) for v in row.labeled_level_dist])


def write_timing_csv(curve: LearningCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "wall_time_s"])
        for row in curve.rows:
            writer.writerow([row.round, _fmt(row.wall_time_s)])


def read_curve_csv(path, strategy: str, run_seed: int) -> LearningCurve:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise ValueError(f"{path}: unexpected curve columns {reader.fieldnames}")
        for record in reader:
            rows.append(MetricsRow(
                round=int(record["round"]),
                labeled_size=int(record["labeled_size"]),
                discrete_rmse=float(record["discrete_rmse"]),
                per_level_rmse=np.array([float(record[f"rmse_l{k}"]) for k in LEVELS]),
                labeled_level_dist=np.array([float(record[f"dist_l{k}"]) for k in LEVELS]),
                wall_time_s=float("nan"),
            ))
    return LearningCurve(rows=rows, strategy=strategy, run_seed=run_seed)


def write_aggregate_csv(aggregates: list[AggregateCurve], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["strategy", "round", "labeled_size", "n_runs", "rmse_mean", "rmse_se"]
        for k in LEVELS:
            header += [f"rmse_l{k}_mean", f"rmse_l{k}_se"]
        for k in LEVELS:
            header += [f"dist_l{k}_mean", f"dist_l{k}_se"]
        writer.writerow(header)
        for agg in aggregates:
            for i in range(agg.sizes.size):
                record = [agg.strategy, int(agg.rounds[i]), int(agg.sizes[i]), agg.n_runs,
                          _fmt(agg.mean_rmse[i]), _fmt(agg.se_rmse[i])]
                for k in LEVELS:
                    record += [_fmt(agg.mean_per_level[i, k]), _fmt(agg.se_per_level[i, k])]
                for k in LEVELS:
                    record += [_fmt(agg.mean_dist[i, k]), _fmt(agg.se_dist[i, k])]
                writer.writerow(record)

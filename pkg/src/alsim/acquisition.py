"""Batch acquisition strategies over a pool of unlabeled candidates.

Three strategies are supported: uniform sampling, top-K selection on the
MC-dropout variance score, and variance selection with Gumbel-perturbed
log-scores. The perturbed variant is equivalent to sampling candidates
without replacement with probability proportional to score**beta, so it
interpolates between uniform acquisition (beta -> 0) and deterministic
top-K acquisition (beta -> inf).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabelState
from .model import Regressor, SampleMatrix

STRATEGIES = ("uniform", "topk_variance", "powervariance")
VARIANCE_STRATEGIES = ("topk_variance", "powervariance")


@dataclass(frozen=True)
class AcquisitionConfig:
    strategy: str
    batch_k: int = 100
    beta: float = 1.0
    mc_samples: int = 10
    pool_subset_m: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; valid strategies: {', '.join(STRATEGIES)}"
            )
        if self.batch_k < 1:
            raise ValueError("batch_k must be at least 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.pool_subset_m < self.batch_k:
            raise ValueError("pool_subset_m must be at least batch_k")
        if self.strategy in VARIANCE_STRATEGIES and self.mc_samples < 2:
            raise ValueError("variance strategies need at least 2 MC samples")


@dataclass(frozen=True)
class ScoredCandidates:
    """Pool candidates with their variance scores and optional perturbed scores."""

    indices: np.ndarray
    s_var: np.ndarray
    s_power: np.ndarray | None = None


@dataclass(frozen=True)
class AcquisitionResult:
    chosen: np.ndarray
    scored: ScoredCandidates | None
    chosen_positions: np.ndarray | None

    def chosen_scores(self) -> np.ndarray | None:
        if self.scored is None:
            return None
        return self.scored.s_var[self.chosen_positions]


def variance_score(samples: SampleMatrix) -> np.ndarray:
    """Per-candidate population variance across the MC passes (divide by T)."""
    if samples.t_samples < 2:
        raise ValueError("variance needs at least 2 MC samples")
    return samples.values.var(axis=0)


def sample_gumbel(rng, beta: float, size=None):
    """Draw from Gumbel(0, 1/beta) as -log(-log(u))/beta with u in (0, 1)."""
    if beta <= 0:
        raise ValueError("beta must be positive for Gumbel sampling")
    u = np.asarray(rng.random(size), dtype=np.float64)
    while (zero := u == 0.0).any():  # u must be strictly positive
        u[zero] = rng.random(int(zero.sum()))
    draws = -np.log(-np.log(u)) / beta
    return float(draws) if size is None else draws


def power_perturb(s_var, beta: float, rng) -> np.ndarray:
    """Log-scores plus fresh Gumbel noise; zero scores map to -inf.

    A -inf entry can never outrank a finite one, so uninformative candidates
    are excluded from selection unless the batch cannot otherwise be filled.
    """
    s_var = np.asarray(s_var, dtype=np.float64)
    if not np.isfinite(s_var).all():
        raise ValueError("variance scores must be finite")
    if (s_var < 0).any():
        raise ValueError("variance scores must be non-negative")
    noise = sample_gumbel(rng, beta, size=s_var.shape)
    out = np.full(s_var.shape, -np.inf)
    positive = s_var > 0
    out[positive] = np.log(s_var[positive]) + noise[positive]
    return out


def select_topk(scores, k: int) -> np.ndarray:
    """Positions of the k largest scores, descending, ties broken by lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if np.isnan(scores).any():
        raise ValueError("scores must not contain NaN")
    if k > scores.size:
        raise ValueError(f"cannot select top {k} of {scores.size} candidates")
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:k]


def powervariance_select(s_var, k: int, beta: float, rng) -> np.ndarray:
    """Select k candidate positions by Gumbel-perturbed log-variance scores.

    Equivalent to sampling without replacement with probability proportional
    to s_var**beta. beta == 0 is implemented as exact uniform sampling over
    positive-score candidates (perturbation scales diverge in that limit).
    Zero-score candidates are drawn on uniformly only when fewer than k
    candidates score above zero.
    """
    s_var = np.asarray(s_var, dtype=np.float64)
    if k > s_var.size:
        raise ValueError(f"cannot select {k} of {s_var.size} candidates")
    s_power = power_perturb(s_var, beta, rng) if beta > 0 else None
    return _select_powervariance(s_var, s_power, k, rng)


def acquire_scored(model: Regressor | None, train_features, state: LabelState,
                   config: AcquisitionConfig, rng) -> AcquisitionResult:
    """Score a random pool subset and select a batch of train indices.

    `train_features` is the full training feature matrix, indexed by the pool
    indices in `state`. Uniform acquisition never evaluates the model (the
    features may be None); variance strategies run `mc_samples` stochastic
    passes on the subset and select against the per-candidate variances.
    """
    k = config.batch_k
    if state.pool_size < k:
        raise ValueError(f"pool has {state.pool_size} candidates, need at least {k}")
    m = min(config.pool_subset_m, state.pool_size)
    subset = rng.choice(state.pool, size=m, replace=False)
    if config.strategy == "uniform":
        chosen = rng.choice(subset, size=k, replace=False)
        return AcquisitionResult(chosen=chosen, scored=None, chosen_positions=None)
    if model is None or not model.trained:
        raise ValueError(f"strategy {config.strategy!r} requires a trained model")
    samples = model.mc_predict(np.asarray(train_features)[subset], config.mc_samples, rng)
    s_var = variance_score(samples)
    s_power = None
    if config.strategy == "topk_variance":
        positions = select_topk(s_var, k)
    else:
        if config.beta > 0:
            s_power = power_perturb(s_var, config.beta, rng)
        positions = _select_powervariance(s_var, s_power, k, rng)
    scored = ScoredCandidates(indices=subset, s_var=s_var, s_power=s_power)
    return AcquisitionResult(chosen=subset[positions], scored=scored,
                             chosen_positions=positions)


def _select_powervariance(s_var, s_power, k, rng) -> np.ndarray:
    positive = np.flatnonzero(s_var > 0)
    if s_power is None:  # beta == 0: exact uniform over informative candidates
        if positive.size >= k:
            return rng.choice(positive, size=k, replace=False)
        chosen = positive
    else:
        if positive.size >= k:
            return select_topk(s_power, k)
        chosen = select_topk(s_power, positive.size)
    zeros = np.flatnonzero(s_var == 0)
    fill = rng.choice(zeros, size=k - chosen.size, replace=False)
    return np.concatenate([chosen, fill])


def acquire(model: Regressor | None, train_features, state: LabelState,
            config: AcquisitionConfig, rng) -> np.ndarray:
    """Acquire a batch of `batch_k` distinct train indices from the pool."""
    return acquire_scored(model, train_features, state, config, rng).chosen

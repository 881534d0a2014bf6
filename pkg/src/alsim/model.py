"""Dropout feed-forward regressor with deterministic and MC-dropout prediction.

The network is a plain ReLU MLP with a single linear output unit, trained
from scratch with decoupled-weight-decay adaptive-moment updates and a linear
warmup schedule. Dropout uses the inverted convention (activations scaled by
1/(1-p) whenever masks are applied), so deterministic prediction needs no
rescaling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Conservative preset typical for fine-tuning pre-trained backbones; the
# default below suits a small MLP trained from scratch.
FINETUNE_LEARNING_RATE = 2e-5


@dataclass(frozen=True)
class RegressorConfig:
    # input_dim may stay None until a dataset fixes it (see loop._resolve_regressor)
    input_dim: int | None = None
    hidden_widths: tuple[int, ...] = (64, 64)
    dropout_rate: float = 0.1
    learning_rate: float = 1e-3
    weight_decay: float = 0.05
    epochs: int = 10
    batch_size: int = 64
    warmup_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        if self.input_dim is not None and self.input_dim <= 0:
            raise ValueError("input_dim must be positive")
        if any(w <= 0 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate, epochs, and batch_size must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1]")


@dataclass
class TrainReport:
    """Per-epoch train/validation losses and the restored best epoch (1-based)."""

    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int


@dataclass(frozen=True)
class SampleMatrix:
    """T x N matrix of stochastic forward passes over N inputs."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 2:
            raise ValueError("sample matrix must be 2-D (passes x examples)")
        if not np.isfinite(self.values).all():
            raise ValueError("sample matrix entries must be finite")

    @property
    def t_samples(self) -> int:
        return self.values.shape[0]


class Regressor:
    """ReLU MLP regressor with He initialization and a frozen initial snapshot."""

    def __init__(self, config: RegressorConfig):
        if config.input_dim is None:
            raise ValueError("config.input_dim must be set to build a regressor")
        self.config = config
        dims = [config.input_dim, *config.hidden_widths, 1]
        self._rng = np.random.default_rng(config.seed)
        self.weights = [
            self._rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
            for i in range(len(dims) - 1)
        ]
        self.biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        self._initial_weights = [w.copy() for w in self.weights]
        self._initial_biases = [b.copy() for b in self.biases]
        self._adam = None
        self.trained = False

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def summary(self) -> dict:
        return {
            "input_dim": self.config.input_dim,
            "hidden_widths": list(self.config.hidden_widths),
            "dropout_rate": self.config.dropout_rate,
            "n_params": self.n_params,
            "trained": self.trained,
        }

    def reinitialize(self) -> None:
        """Restore the frozen initial weights and clear optimizer state."""
        self.weights = [w.copy() for w in self._initial_weights]
        self.biases = [b.copy() for b in self._initial_biases]
        self._adam = None
        self.trained = False

    # -- forward / backward ------------------------------------------------

    def _check_inputs(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected features of shape (n, {self.config.input_dim}), got {features.shape}"
            )
        return features

    def _forward(self, features, dropout_rng=None):
        """Forward pass; returns (predictions, caches) for backprop.

        Dropout masks are drawn from `dropout_rng` independently per example
        and per unit; with no RNG (or rate 0) the pass is deterministic.
        """
        rate = self.config.dropout_rate
        activation = features
        caches = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            pre = activation @ w + b
            hidden = np.maximum(pre, 0.0)
            mask = None
            if dropout_rng is not None and rate > 0.0:
                mask = (dropout_rng.random(hidden.shape) >= rate) / (1.0 - rate)
                hidden = hidden * mask
            caches.append((activation, pre, mask))
            activation = hidden
        preds = (activation @ self.weights[-1] + self.biases[-1])[:, 0]
        caches.append((activation, None, None))
        return preds, caches

    def _backward(self, preds, targets, caches):
        n = preds.shape[0]
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        d_out = (2.0 / n) * (preds - targets)
        last_in = caches[-1][0]
        grad_w[-1] = last_in.T @ d_out[:, None]
        grad_b[-1] = np.array([d_out.sum()])
        d_act = d_out[:, None] @ self.weights[-1].T
        for i in range(len(self.weights) - 2, -1, -1):
            act_in, pre, mask = caches[i]
            if mask is not None:
                d_act = d_act * mask
            d_pre = d_act * (pre > 0.0)
            grad_w[i] = act_in.T @ d_pre
            grad_b[i] = d_pre.sum(axis=0)
            d_act = d_pre @ self.weights[i].T
        return grad_w, grad_b

    def loss_and_grad(self, features, targets):
        """MSE loss and analytic parameter gradients with dropout disabled."""
        features = self._check_inputs(features)
        targets = np.asarray(targets, dtype=np.float64)
        preds, caches = self._forward(features)
        loss = float(np.mean((preds - targets) ** 2))
        grad_w, grad_b = self._backward(preds, targets, caches)
        return loss, grad_w, grad_b

    # -- prediction ---------------------------------------------------------

    def predict(self, features) -> np.ndarray:
        """Deterministic forward pass with dropout disabled."""
        features = self._check_inputs(features)
        preds, _ = self._forward(features)
        return preds

    def mc_predict(self, features, t_samples: int, rng) -> SampleMatrix:
        """Stochastic forward passes with dropout active, one row per pass."""
        if t_samples < 1:
            raise ValueError("t_samples must be at least 1")
        features = self._check_inputs(features)
        rows = np.empty((t_samples, features.shape[0]))
        for t in range(t_samples):
            rows[t], _ = self._forward(features, dropout_rng=rng)
        return SampleMatrix(values=rows)

    # -- training -----------------------------------------------------------

    def _adam_step(self, grad_w, grad_b, lr_t):
        state = self._adam
        state["step"] += 1
        t = state["step"]
        bc1 = 1.0 - ADAM_BETA1**t
        bc2 = 1.0 - ADAM_BETA2**t
        wd = self.config.weight_decay
        for params, grads, m_key, v_key, decay in (
            (self.weights, grad_w, "mw", "vw", True),
            (self.biases, grad_b, "mb", "vb", False),
        ):
            for i, (p, g) in enumerate(zip(params, grads)):
                m = state[m_key][i]
                v = state[v_key][i]
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * g * g
                p -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
                if decay and wd > 0.0:
                    # Decoupled decay on weight matrices; biases are exempt.
                    p -= lr_t * wd * p

    def train(self, features, targets, val_features, val_targets) -> TrainReport:
        """Mini-batch training with decoupled weight decay and linear warmup.

        Validation MSE is computed with dropout off after every epoch and the
        best-epoch weights are restored at the end.
        """
        features = self._check_inputs(features)
        targets = np.asarray(targets, dtype=np.float64)
        if features.shape[0] == 0:
            raise ValueError("cannot train on an empty labeled set")
        if targets.shape != (features.shape[0],):
            raise ValueError("targets must be a vector matching the feature rows")
        val_features = self._check_inputs(val_features)
        val_targets = np.asarray(val_targets, dtype=np.float64)
        if val_features.shape[0] == 0:
            raise ValueError("validation set must be non-empty")

        cfg = self.config
        n = features.shape[0]
        n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
        total_steps = cfg.epochs * n_batches
        warmup_steps = int(round(cfg.warmup_ratio * total_steps))
        self._adam = {
            "step": 0,
            "mw": [np.zeros_like(w) for w in self.weights],
            "vw": [np.zeros_like(w) for w in self.weights],
            "mb": [np.zeros_like(b) for b in self.biases],
            "vb": [np.zeros_like(b) for b in self.biases],
        }

        train_losses = []
        val_losses = []
        best_val = np.inf
        best_epoch = 0
        best_weights = None
        best_biases = None
        step = 0
        for epoch in range(1, cfg.epochs + 1):
            perm = self._rng.permutation(n)
            sq_err_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = perm[start:start + cfg.batch_size]
                x = features[batch]
                y = targets[batch]
                preds, caches = self._forward(
                    x, dropout_rng=self._rng if cfg.dropout_rate > 0.0 else None
                )
                batch_loss = float(np.mean((preds - y) ** 2))
                if not np.isfinite(batch_loss):
                    raise RuntimeError(f"training diverged at epoch {epoch}: non-finite loss")
                sq_err_sum += batch_loss * len(batch)
                grad_w, grad_b = self._backward(preds, y, caches)
                step += 1
                warm = min(1.0, step / warmup_steps) if warmup_steps > 0 else 1.0
                self._adam_step(grad_w, grad_b, cfg.learning_rate * warm)
            train_losses.append(sq_err_sum / n)
            val_mse = float(np.mean((self.predict(val_features) - val_targets) ** 2))
            if not np.isfinite(val_mse):
                raise RuntimeError(f"training diverged at epoch {epoch}: non-finite loss")
            val_losses.append(val_mse)
            if val_mse < best_val:
                best_val = val_mse
                best_epoch = epoch
                best_weights = [w.copy() for w in self.weights]
                best_biases = [b.copy() for b in self.biases]
        self.weights = best_weights
        self.biases = best_biases
        self.trained = True
        return TrainReport(train_losses=train_losses, val_losses=val_losses,
                           best_epoch=best_epoch)

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """Write current weights as JSON: a dims header plus flat tensors."""
        payload = {
            "dims": [list(w.shape) for w in self.weights] + [list(b.shape) for b in self.biases],
            "tensors": [w.ravel().tolist() for w in self.weights]
            + [b.ravel().tolist() for b in self.biases],
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    def load_checkpoint(self, path) -> None:
        """Restore weights from :meth:`save_checkpoint` output, bit-exactly."""
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        expected = [list(w.shape) for w in self.weights] + [list(b.shape) for b in self.biases]
        if payload["dims"] != expected:
            raise ValueError(f"checkpoint dims {payload['dims']} do not match model {expected}")
        tensors = [np.asarray(t, dtype=np.float64).reshape(shape)
                   for t, shape in zip(payload["tensors"], payload["dims"])]
        k = len(self.weights)
        self.weights = tensors[:k]
        self.biases = tensors[k:]

"""Training loop, early stopping, cohort splits, and prediction.

Seed discipline: one experiment seed drives three independent Philox
streams via SeedSequence spawn keys, so changing one use never perturbs
the others:

  spawn_key (0,)  parameter initialisation (inside net.init_params)
  spawn_key (1,)  per-epoch shuffling of the training records
  spawn_key (2,)  the train/val/test split permutation

Early stopping monitors the validation objective (configurable to the
training objective), with strict improvement and a patience budget. The
returned parameters are a snapshot from the best monitored epoch, not the
last one. Epochs are numbered from 1 in traces and error messages; a
batch index of -1 in TrainingDivergedError means the validation pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Cohort, DEPRESSION_THRESHOLD, N_TASKS
from .errors import ConfigError, InputError, TrainingDivergedError
from .losses import LossSpec
from .net import (
    Batch,
    DEFAULT_HIDDEN_DIM,
    DEFAULT_LR,
    ModelConfig,
    ModelParams,
    adam_step,
    backward_batch,
    batchify,
    forward_batch,
    init_optimizer,
    init_params,
    loss_value,
)

DEFAULT_BATCH_SIZE = 32
DEFAULT_MAX_EPOCHS = 150
DEFAULT_PATIENCE = 10
DEFAULT_SPLIT = (0.7, 0.15, 0.15)
STOP_METRICS = ("val_loss", "train_loss")


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation hyperparameters plus the objective to train."""

    loss: LossSpec = LossSpec()
    lr: float = DEFAULT_LR
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    stop_metric: str = "val_loss"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be at least 1, got {self.patience}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if self.stop_metric not in STOP_METRICS:
            raise ConfigError(f"stop_metric must be one of {STOP_METRICS}, got {self.stop_metric}")
        if self.lr <= 0 or not np.isfinite(self.lr):
            raise ConfigError(f"lr must be positive and finite, got {self.lr}")


@dataclass(frozen=True)
class EpochStats:
    """One trace row: losses plus the learned precision weights, if any."""

    epoch: int
    train_loss: float
    val_loss: float
    inv_sigma_sq: np.ndarray | None


@dataclass(frozen=True)
class TrainTrace:
    """Per-epoch history plus where training stopped and which epoch won."""

    epochs: list[EpochStats]
    best_epoch: int
    stopped_epoch: int


@dataclass
class EarlyStopper:
    """Strict-improvement stopping rule with a patience budget.

    An epoch improves only when its monitored value is strictly below the
    best seen so far; `wait` counts consecutive non-improving epochs and
    stopping triggers once it reaches `patience`.
    """

    patience: int
    best_value: float = np.inf
    best_epoch: int = 0
    wait: int = 0

    def update(self, value: float, epoch: int) -> tuple[bool, bool]:
        """Feed one epoch's monitored value; returns (improved, should_stop)."""
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.wait = 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


def split_cohort(
    cohort: Cohort, seed: int, fractions: tuple[float, float, float] = DEFAULT_SPLIT
) -> tuple[Cohort, Cohort, Cohort]:
    """Deterministic train/val/test partition of a cohort.

    Sizes are floor(n * f) for train and val; test takes the remainder.
    The permutation comes from the experiment seed's split stream, so the
    same (cohort, seed) always yields the same partition.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    n = len(cohort)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2,))))
    perm = rng.permutation(n)
    n_train = math.floor(n * fractions[0])
    n_val = math.floor(n * fractions[1])
    parts = (perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :])
    return tuple(
        Cohort(records=[cohort.records[i] for i in idx], config_hash=cohort.config_hash)
        for idx in parts
    )


def _epoch_batches(perm: np.ndarray, batch_size: int):
    for start in range(0, perm.size, batch_size):
        yield perm[start : start + batch_size]


def train(
    train_cohort: Cohort, val_cohort: Cohort, config: TrainConfig
) -> tuple[ModelParams, TrainTrace]:
    """Fit one model; returns the best-validation snapshot and the trace."""
    if not train_cohort.records or not val_cohort.records:
        raise InputError("train and validation cohorts must both be non-empty")
    spec = config.loss
    if spec.mode == "unitask" and spec.task is None:
        raise ConfigError("unitask training requires a task index in the loss spec")
    model_config = ModelConfig(train_cohort.feature_dims, config.hidden_dim)
    params = init_params(model_config, config.seed, spec.uncertainty)
    opt = init_optimizer(params, config.lr)
    full = batchify(train_cohort.records)
    val_batch = batchify(val_cohort.records)
    if val_cohort.feature_dims != train_cohort.feature_dims:
        raise ConfigError("validation cohort feature dims do not match training cohort")
    shuffle_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    )

    stats: list[EpochStats] = []
    best_params = params.copy()
    stopper = EarlyStopper(patience=config.patience)
    stopped_epoch = config.max_epochs
    for epoch in range(1, config.max_epochs + 1):
        perm = shuffle_rng.permutation(len(full))
        batch_losses = []
        for batch_idx, idx in enumerate(_epoch_batches(perm, config.batch_size)):
            loss, grads = backward_batch(params, full.take(idx), spec)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_idx)
            params, opt = adam_step(params, grads, opt)
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        val_loss = loss_value(params, val_batch, spec)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch, -1)
        inv_sigma_sq = None if params.log_var is None else np.exp(-params.log_var)
        stats.append(EpochStats(epoch, train_loss, val_loss, inv_sigma_sq))

        monitored = val_loss if config.stop_metric == "val_loss" else train_loss
        improved, should_stop = stopper.update(monitored, epoch)
        if improved:
            best_params = params.copy()
        if should_stop:
            stopped_epoch = epoch
            break
    return best_params, TrainTrace(
        epochs=stats, best_epoch=stopper.best_epoch, stopped_epoch=stopped_epoch
    )


def train_unitask_suite(
    train_cohort: Cohort, val_cohort: Cohort, config: TrainConfig
) -> tuple[list[ModelParams], list[TrainTrace]]:
    """Train 8 single-task models, one per subitem, sharing the seed."""
    models, traces = [], []
    for t in range(N_TASKS):
        cfg = replace(config, loss=config.loss.for_task(t))
        params, trace = train(train_cohort, val_cohort, cfg)
        models.append(params)
        traces.append(trace)
    return models, traces


@dataclass(frozen=True)
class Prediction:
    """Per-record predicted subitem scores, totals, and binary outcomes."""

    score_hat: np.ndarray
    total_hat: np.ndarray
    binary_hat: np.ndarray

    def __len__(self) -> int:
        return self.score_hat.shape[0]


def _predict_from_q(q: np.ndarray) -> Prediction:
    score_hat = q.argmax(axis=-1).astype(np.int64)  # ties resolve to the lowest bin
    total_hat = score_hat.sum(axis=1)
    return Prediction(
        score_hat=score_hat,
        total_hat=total_hat,
        binary_hat=(total_hat >= DEPRESSION_THRESHOLD).astype(np.int64),
    )


def predict(params: ModelParams, cohort: Cohort) -> Prediction:
    """Argmax decode of every head, then sum and threshold."""
    if not cohort.records:
        raise InputError("cannot predict on an empty cohort")
    _, _, _, q = forward_batch(params, batchify(cohort.records))
    return _predict_from_q(q)


def predict_unitask_suite(models: list[ModelParams], cohort: Cohort) -> Prediction:
    """Merge 8 single-task models: model t supplies the task-t scores."""
    if len(models) != N_TASKS:
        raise InputError(f"expected {N_TASKS} models, got {len(models)}")
    if not cohort.records:
        raise InputError("cannot predict on an empty cohort")
    batch = batchify(cohort.records)
    q = np.empty((len(batch), N_TASKS, 4))
    for t, params in enumerate(models):
        _, _, _, q_t = forward_batch(params, batch)
        q[:, t, :] = q_t[:, t, :]
    return _predict_from_q(q)


def batch_for(cohort: Cohort) -> Batch:
    """Batchified view of a whole cohort (exposed for evaluation code)."""
    return batchify(cohort.records)

"""Training objectives built on per-task KL divergence.

Four modes share one per-record, per-task building block: the KL divergence
from the soft target distribution p to the predicted distribution q,

    kl(p, q) = sum_k p_k * log(p_k / q_k),

with q floored at epsilon_q and renormalised before the log. Batch
reduction is always the arithmetic mean over records.

Modes:
  unitask  loss of one designated task, other heads receive no signal
  mtl      fixed-weight sum of the 8 task losses (weights default to 1)
  uw       uncertainty weighting: sum_t exp(-s_t) L_t + s_t / 2, where
           s_t = log sigma_t^2 is a trained per-task log-variance
  ufair    uw applied per demographic group, averaged over the groups
           present in the batch
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import DEFAULT_SIGMA_G, N_TASKS
from .errors import ConfigError, InputError

MODES = ("unitask", "mtl", "uw", "ufair")
DEFAULT_EPSILON_Q = 1e-12
N_GROUPS = 2


@dataclass(frozen=True)
class LossSpec:
    """Which objective to optimise and its fixed hyperparameters.

    `task` selects the target subitem in unitask mode and must be None in
    the other modes. `task_weights` only matters for mtl.
    """

    mode: str = "mtl"
    task: int | None = None
    task_weights: tuple[float, ...] = (1.0,) * N_TASKS
    sigma_g: float = DEFAULT_SIGMA_G
    epsilon_q: float = DEFAULT_EPSILON_Q

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown loss mode {self.mode!r}, expected one of {MODES}")
        if len(self.task_weights) != N_TASKS:
            raise ConfigError(f"task_weights must have length {N_TASKS}")
        if not all(np.isfinite(w) for w in self.task_weights):
            raise ConfigError("task_weights must be finite")
        if self.sigma_g < 0 or not np.isfinite(self.sigma_g):
            raise ConfigError(f"sigma_g must be finite and non-negative, got {self.sigma_g}")
        if not 0.0 < self.epsilon_q <= 1e-6:
            raise ConfigError(f"epsilon_q must lie in (0, 1e-6], got {self.epsilon_q}")
        if self.task is not None:
            if self.mode != "unitask":
                raise ConfigError("task index is only meaningful in unitask mode")
            if not 0 <= self.task < N_TASKS:
                raise ConfigError(f"task index {self.task} outside 0..{N_TASKS - 1}")

    def for_task(self, task: int) -> "LossSpec":
        """Copy of this spec targeting one subitem (unitask suites)."""
        return replace(self, mode="unitask", task=task)

    @property
    def uncertainty(self) -> str | None:
        """Shape of the trained log-variance block, if any."""
        if self.mode == "uw":
            return "task"
        if self.mode == "ufair":
            return "group"
        return None


def _clamp_renormalise(q: np.ndarray, epsilon_q: float) -> np.ndarray:
    qc = np.maximum(q, epsilon_q)
    return qc / qc.sum(axis=-1, keepdims=True)


def kl_loss(p: np.ndarray, q: np.ndarray, epsilon_q: float = DEFAULT_EPSILON_Q) -> float:
    """KL divergence from target p to prediction q over the 4 score bins.

    q is floored at epsilon_q and renormalised; p entries equal to zero
    contribute zero regardless of q.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.shape[-1] != 4:
        raise InputError(f"expected matching 4-bin distributions, got {p.shape} and {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise InputError("distributions must be non-negative")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise InputError("distributions must be finite")
    qc = _clamp_renormalise(q, epsilon_q)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / qc), 0.0)
    return float(terms.sum())


def kl_matrix(p: np.ndarray, q: np.ndarray, epsilon_q: float = DEFAULT_EPSILON_Q) -> np.ndarray:
    """(B, T) per-record, per-task KL values for stacked distributions.

    p and q have shape (B, T, 4). No validation beyond shape: this is the
    training hot path and its inputs come from softmax and the soft-label
    table, both of which guarantee valid distributions.
    """
    if p.shape != q.shape or p.ndim != 3 or p.shape[-1] != 4:
        raise InputError(f"expected (B, T, 4) stacks, got {p.shape} and {q.shape}")
    qc = _clamp_renormalise(q, epsilon_q)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / qc), 0.0)
    return terms.sum(axis=-1)


def per_task_means(kl_bt: np.ndarray) -> np.ndarray:
    """(T,) batch-mean loss per task from a (B, T) KL matrix."""
    if kl_bt.ndim != 2 or kl_bt.shape[0] == 0:
        raise InputError(f"expected a non-empty (B, T) matrix, got shape {kl_bt.shape}")
    return kl_bt.mean(axis=0)


def group_task_means(kl_bt: np.ndarray, groups: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-group batch means and a presence mask.

    Returns (means, present) where means has shape (2, T) and present is a
    boolean 2-vector. Rows of absent groups are zero and must be ignored.
    """
    if kl_bt.ndim != 2 or kl_bt.shape[0] == 0:
        raise InputError(f"expected a non-empty (B, T) matrix, got shape {kl_bt.shape}")
    groups = np.asarray(groups)
    if groups.shape != (kl_bt.shape[0],):
        raise InputError("groups must be a vector matching the batch dimension")
    means = np.zeros((N_GROUPS, kl_bt.shape[1]))
    present = np.zeros(N_GROUPS, dtype=bool)
    for g in range(N_GROUPS):
        mask = groups == g
        if mask.any():
            present[g] = True
            means[g] = kl_bt[mask].mean(axis=0)
    return means, present


def unitask_loss(kl_bt: np.ndarray, task: int) -> float:
    """Batch-mean KL of one designated task."""
    if not 0 <= task < kl_bt.shape[1]:
        raise InputError(f"task index {task} outside 0..{kl_bt.shape[1] - 1}")
    return float(per_task_means(kl_bt)[task])


def mtl_loss(task_losses: np.ndarray, weights: np.ndarray) -> float:
    """Fixed-weight sum over per-task losses."""
    task_losses = np.asarray(task_losses, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if task_losses.shape != weights.shape:
        raise InputError("task_losses and weights must have matching shapes")
    # np.sum, not @: the same reduction order as uw_loss keeps the
    # zero-log-variance identity between the two objectives bit-exact
    return float(np.sum(weights * task_losses))


def uw_loss(task_losses: np.ndarray, log_var: np.ndarray) -> float:
    """Uncertainty-weighted sum: sum_t exp(-s_t) L_t + s_t / 2."""
    task_losses = np.asarray(task_losses, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    if task_losses.shape != log_var.shape:
        raise InputError("task_losses and log_var must have matching shapes")
    return float(np.sum(np.exp(-log_var) * task_losses + 0.5 * log_var))


def ufair_loss(
    group_task_losses: np.ndarray,
    log_var: np.ndarray,
    present: np.ndarray,
) -> float:
    """Group-wise uncertainty weighting averaged over present groups.

    group_task_losses and log_var have shape (2, T); rows of absent groups
    are ignored. At least one group must be present.
    """
    group_task_losses = np.asarray(group_task_losses, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    if group_task_losses.shape != log_var.shape or group_task_losses.ndim != 2:
        raise InputError("group_task_losses and log_var must both be (2, T)")
    if present.shape != (group_task_losses.shape[0],):
        raise InputError("present must be a boolean vector with one entry per group")
    if not present.any():
        raise InputError("at least one group must be present in the batch")
    total = 0.0
    for g in np.flatnonzero(present):
        total += uw_loss(group_task_losses[g], log_var[g])
    return total / int(present.sum())


def combined_loss_from_kl(
    kl_bt: np.ndarray,
    groups: np.ndarray,
    spec: LossSpec,
    log_var: np.ndarray | None,
) -> float:
    """Dispatch a (B, T) KL matrix to the objective named by `spec`."""
    if spec.mode == "unitask":
        if spec.task is None:
            raise ConfigError("unitask mode requires a task index")
        return unitask_loss(kl_bt, spec.task)
    if spec.mode == "mtl":
        return mtl_loss(per_task_means(kl_bt), np.asarray(spec.task_weights))
    if spec.mode == "uw":
        if log_var is None or log_var.shape != (kl_bt.shape[1],):
            raise ConfigError("uw mode requires a per-task log_var vector")
        return uw_loss(per_task_means(kl_bt), log_var)
    if log_var is None or log_var.shape != (N_GROUPS, kl_bt.shape[1]):
        raise ConfigError("ufair mode requires a per-group log_var matrix")
    means, present = group_task_means(kl_bt, groups)
    return ufair_loss(means, log_var, present)


def combined_loss(
    p: np.ndarray,
    q: np.ndarray,
    groups: np.ndarray,
    spec: LossSpec,
    log_var: np.ndarray | None,
) -> float:
    """combined_loss_from_kl applied to raw (B, T, 4) distribution stacks."""
    return combined_loss_from_kl(kl_matrix(p, q, spec.epsilon_q), groups, spec, log_var)

"""Model parameters, forward/backward passes, Adam, and checkpoints.

Architecture, all float64:

  encoders   one affine + tanh map per modality, d_m -> H
  attention  per task, a scoring vector in R^H is dotted with each of the
             3 modality encodings; softmax over modalities gives weights
             for a convex combination of the encodings
  heads      per task, affine H -> 4 followed by softmax over score bins

The backward pass is exact. For every objective the gradient of the loss
with respect to a head's pre-softmax activations factors as

  dL/dlogits[i, t] = coef[i, t] * (q[i, t] - p[i, t])

where coef carries the mode-specific weighting (task selection, fixed
weights, exp(-s) uncertainty factors, group averaging) and the kernels
propagate dlogits back through heads, attention, and encoders. Trained
log-variances get their own closed-form gradient.

Parameter vector order (used by to_vector / from_vector and checkpoints):
  enc_w audio, enc_b audio, enc_w visual, enc_b visual, enc_w text,
  enc_b text, attn_q, head_w, head_b, then log_var when present.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import losses
from .backend import get_kernels
from .core import N_CLASSES, N_TASKS, ParticipantRecord, soft_label_table
from .errors import ConfigError, FileFormatError, InputError, NumericError
from .losses import LossSpec

CHECKPOINT_FORMAT = "fairphq-checkpoint"
CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN_DIM = 32
UNCERTAINTY_KINDS = (None, "task", "group")

DEFAULT_LR = 2e-4
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    """Static architecture description: input widths and hidden width."""

    feature_dims: tuple[int, int, int]
    hidden_dim: int = DEFAULT_HIDDEN_DIM

    def __post_init__(self) -> None:
        if len(self.feature_dims) != 3 or any(d < 1 for d in self.feature_dims):
            raise ConfigError(f"feature_dims must be three positive ints, got {self.feature_dims}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be positive, got {self.hidden_dim}")
        object.__setattr__(self, "feature_dims", tuple(int(d) for d in self.feature_dims))


@dataclass
class ModelParams:
    """All trainable state. log_var is None unless the objective trains it."""

    enc_w: list[np.ndarray]
    enc_b: list[np.ndarray]
    attn_q: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    log_var: np.ndarray | None = None

    @property
    def feature_dims(self) -> tuple[int, int, int]:
        return tuple(w.shape[1] for w in self.enc_w)

    @property
    def hidden_dim(self) -> int:
        return self.attn_q.shape[1]

    @property
    def uncertainty(self) -> str | None:
        if self.log_var is None:
            return None
        return "task" if self.log_var.ndim == 1 else "group"

    @property
    def n_params(self) -> int:
        return to_vector(self).size

    def copy(self) -> "ModelParams":
        return ModelParams(
            enc_w=[w.copy() for w in self.enc_w],
            enc_b=[b.copy() for b in self.enc_b],
            attn_q=self.attn_q.copy(),
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
            log_var=None if self.log_var is None else self.log_var.copy(),
        )


def _log_var_shape(uncertainty: str | None) -> tuple[int, ...] | None:
    if uncertainty is None:
        return None
    if uncertainty == "task":
        return (N_TASKS,)
    if uncertainty == "group":
        return (losses.N_GROUPS, N_TASKS)
    raise ConfigError(f"unknown uncertainty kind {uncertainty!r}")


def init_params(config: ModelConfig, seed: int, uncertainty: str | None = None) -> ModelParams:
    """Seeded uniform init, scale 1/sqrt(fan_in); biases and log_var zero.

    Draw order: encoder weights in modality order, then attention vectors,
    then head weights. Zero-initialised log-variances make the uw objective
    equal the unweighted mtl objective at step 0.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))
    h = config.hidden_dim
    enc_w, enc_b = [], []
    for d in config.feature_dims:
        bound = 1.0 / np.sqrt(d)
        enc_w.append(rng.uniform(-bound, bound, size=(h, d)))
        enc_b.append(np.zeros(h))
    bound = 1.0 / np.sqrt(h)
    attn_q = rng.uniform(-bound, bound, size=(N_TASKS, h))
    head_w = rng.uniform(-bound, bound, size=(N_TASKS, N_CLASSES, h))
    head_b = np.zeros((N_TASKS, N_CLASSES))
    shape = _log_var_shape(uncertainty)
    log_var = None if shape is None else np.zeros(shape)
    return ModelParams(enc_w, enc_b, attn_q, head_w, head_b, log_var)


def zeros_params(config: ModelConfig, uncertainty: str | None = None) -> ModelParams:
    """All-zero parameters (uniform attention, uniform head outputs)."""
    h = config.hidden_dim
    shape = _log_var_shape(uncertainty)
    return ModelParams(
        enc_w=[np.zeros((h, d)) for d in config.feature_dims],
        enc_b=[np.zeros(h) for _ in config.feature_dims],
        attn_q=np.zeros((N_TASKS, h)),
        head_w=np.zeros((N_TASKS, N_CLASSES, h)),
        head_b=np.zeros((N_TASKS, N_CLASSES)),
        log_var=None if shape is None else np.zeros(shape),
    )


def _fields_in_order(params: ModelParams) -> list[np.ndarray]:
    out = []
    for w, b in zip(params.enc_w, params.enc_b):
        out.extend((w, b))
    out.extend((params.attn_q, params.head_w, params.head_b))
    if params.log_var is not None:
        out.append(params.log_var)
    return out


def to_vector(params: ModelParams) -> np.ndarray:
    """Flatten all trainable arrays into one vector (documented order)."""
    return np.concatenate([a.ravel() for a in _fields_in_order(params)])


def from_vector(template: ModelParams, vec: np.ndarray) -> ModelParams:
    """Inverse of to_vector, shapes taken from `template`."""
    if vec.shape != (to_vector(template).size,):
        raise InputError(f"vector length {vec.shape} does not match template")
    out = template.copy()
    pos = 0
    for a in _fields_in_order(out):
        a[...] = vec[pos : pos + a.size].reshape(a.shape)
        pos += a.size
    return out


@dataclass(frozen=True)
class Batch:
    """Stacked record arrays, the unit the kernels operate on."""

    audio: np.ndarray
    visual: np.ndarray
    text: np.ndarray
    scores: np.ndarray
    groups: np.ndarray

    def __len__(self) -> int:
        return self.audio.shape[0]

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(
            audio=self.audio[idx],
            visual=self.visual[idx],
            text=self.text[idx],
            scores=self.scores[idx],
            groups=self.groups[idx],
        )


def batchify(records: list[ParticipantRecord]) -> Batch:
    """Stack records into contiguous arrays, checking dimension agreement."""
    if not records:
        raise InputError("cannot batch an empty record list")
    dims = (len(records[0].audio), len(records[0].visual), len(records[0].text))
    for r in records:
        if (len(r.audio), len(r.visual), len(r.text)) != dims:
            raise InputError(f"record {r.record_id} has inconsistent feature dims")
    return Batch(
        audio=np.ascontiguousarray([r.audio for r in records]),
        visual=np.ascontiguousarray([r.visual for r in records]),
        text=np.ascontiguousarray([r.text for r in records]),
        scores=np.stack([r.scores for r in records]),
        groups=np.array([r.group.index for r in records], dtype=np.int64),
    )


def _check_dims(params: ModelParams, batch: Batch) -> None:
    got = (batch.audio.shape[1], batch.visual.shape[1], batch.text.shape[1])
    if got != params.feature_dims:
        raise ConfigError(f"batch feature dims {got} do not match model {params.feature_dims}")


def forward_batch(params: ModelParams, batch: Batch):
    """Run the kernels; returns (emb, alpha, fused, q)."""
    _check_dims(params, batch)
    k = get_kernels()
    return k.forward(
        batch.audio,
        batch.visual,
        batch.text,
        params.enc_w[0],
        params.enc_b[0],
        params.enc_w[1],
        params.enc_b[1],
        params.enc_w[2],
        params.enc_b[2],
        params.attn_q,
        params.head_w,
        params.head_b,
    )


def forward(params: ModelParams, record: ParticipantRecord) -> np.ndarray:
    """Per-task head distributions, shape (8, 4), for one record."""
    _, _, _, q = forward_batch(params, batchify([record]))
    out = q[0]
    if not np.all(np.isfinite(out)):
        raise NumericError("forward pass produced non-finite head outputs")
    return out


def _soft_targets(batch: Batch, sigma_g: float) -> np.ndarray:
    return soft_label_table(sigma_g)[batch.scores]


def _loss_coefficients(
    kl_bt: np.ndarray, groups: np.ndarray, spec: LossSpec, log_var: np.ndarray | None
) -> np.ndarray:
    b_n, n_t = kl_bt.shape
    if spec.mode == "unitask":
        if spec.task is None:
            raise ConfigError("unitask mode requires a task index")
        coef = np.zeros((b_n, n_t))
        coef[:, spec.task] = 1.0 / b_n
        return coef
    if spec.mode == "mtl":
        return np.tile(np.asarray(spec.task_weights, dtype=np.float64) / b_n, (b_n, 1))
    if spec.mode == "uw":
        return np.tile(np.exp(-log_var) / b_n, (b_n, 1))
    counts = np.bincount(groups, minlength=losses.N_GROUPS).astype(np.float64)
    present = counts > 0
    n_present = int(present.sum())
    rows = np.zeros((losses.N_GROUPS, n_t))
    for g in np.flatnonzero(present):
        rows[g] = np.exp(-log_var[g]) / (n_present * counts[g])
    return rows[groups]


def _log_var_grad(
    kl_bt: np.ndarray, groups: np.ndarray, spec: LossSpec, log_var: np.ndarray | None
) -> np.ndarray | None:
    if spec.mode == "uw":
        task_means = losses.per_task_means(kl_bt)
        return -np.exp(-log_var) * task_means + 0.5
    if spec.mode == "ufair":
        means, present = losses.group_task_means(kl_bt, groups)
        n_present = int(present.sum())
        grad = np.zeros_like(log_var)
        for g in np.flatnonzero(present):
            grad[g] = (-np.exp(-log_var[g]) * means[g] + 0.5) / n_present
        return grad
    return None


def _require_log_var(params: ModelParams, spec: LossSpec) -> None:
    expected = _log_var_shape(spec.uncertainty)
    got = None if params.log_var is None else params.log_var.shape
    if expected != got:
        raise ConfigError(
            f"mode {spec.mode!r} expects log_var shape {expected}, model carries {got}"
        )


def loss_value(params: ModelParams, batch: Batch, spec: LossSpec) -> float:
    """Scalar objective on a batch, forward pass only."""
    _require_log_var(params, spec)
    _, _, _, q = forward_batch(params, batch)
    p = _soft_targets(batch, spec.sigma_g)
    kl = losses.kl_matrix(p, q, spec.epsilon_q)
    return losses.combined_loss_from_kl(kl, batch.groups, spec, params.log_var)


def backward_batch(params: ModelParams, batch: Batch, spec: LossSpec) -> tuple[float, ModelParams]:
    """Loss and exact gradients on a batch.

    Gradients come back in a ModelParams-shaped container (log_var slot
    filled exactly when the model trains it).
    """
    _require_log_var(params, spec)
    emb, alpha, fused, q = forward_batch(params, batch)
    p = _soft_targets(batch, spec.sigma_g)
    kl = losses.kl_matrix(p, q, spec.epsilon_q)
    loss = losses.combined_loss_from_kl(kl, batch.groups, spec, params.log_var)

    coef = _loss_coefficients(kl, batch.groups, spec, params.log_var)
    dlogits = coef[:, :, None] * (q - p)
    k = get_kernels()
    dwa, dba, dwv, dbv, dwt, dbt, dattn_q, dhead_w, dhead_b = k.backward(
        batch.audio,
        batch.visual,
        batch.text,
        params.enc_w[0],
        params.enc_w[1],
        params.enc_w[2],
        params.attn_q,
        params.head_w,
        emb,
        alpha,
        fused,
        dlogits,
    )
    grads = ModelParams(
        enc_w=[dwa, dwv, dwt],
        enc_b=[dba, dbv, dbt],
        attn_q=dattn_q,
        head_w=dhead_w,
        head_b=dhead_b,
        log_var=_log_var_grad(kl, batch.groups, spec, params.log_var),
    )
    return loss, grads


def backward(
    params: ModelParams, records: list[ParticipantRecord], spec: LossSpec
) -> tuple[float, ModelParams]:
    """backward_batch on a plain record list."""
    return backward_batch(params, batchify(records), spec)


@dataclass
class OptimizerState:
    """Adam moments plus hyperparameters, moments flat in parameter order."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = DEFAULT_LR
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_ADAM_EPS

    def copy(self) -> "OptimizerState":
        return replace(self, m=self.m.copy(), v=self.v.copy())


def init_optimizer(params: ModelParams, lr: float = DEFAULT_LR) -> OptimizerState:
    if lr <= 0 or not np.isfinite(lr):
        raise ConfigError(f"learning rate must be positive and finite, got {lr}")
    n = to_vector(params).size
    return OptimizerState(m=np.zeros(n), v=np.zeros(n), lr=lr)


def adam_step(
    params: ModelParams, grads: ModelParams, state: OptimizerState
) -> tuple[ModelParams, OptimizerState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    theta = to_vector(params)
    g = to_vector(grads)
    if g.shape != theta.shape:
        raise InputError("gradient vector length does not match parameters")
    st = state.copy()
    st.step += 1
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * g
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * g * g
    m_hat = st.m / (1.0 - st.beta1**st.step)
    v_hat = st.v / (1.0 - st.beta2**st.step)
    theta = theta - st.lr * m_hat / (np.sqrt(v_hat) + st.eps)
    return from_vector(params, theta), st


def _nested(arr: np.ndarray | None):
    return None if arr is None else arr.tolist()


def save_checkpoint(
    path: str,
    params: ModelParams,
    opt_state: OptimizerState | None = None,
    meta: dict | None = None,
) -> None:
    """Serialise params (and optionally optimizer state) as JSON.

    Floats go through repr, so a load followed by a save is byte-stable
    and loaded arrays equal the saved ones bit for bit.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": {
            "feature_dims": list(params.feature_dims),
            "hidden_dim": params.hidden_dim,
            "uncertainty": params.uncertainty,
        },
        "params": {
            "enc_w": [_nested(w) for w in params.enc_w],
            "enc_b": [_nested(b) for b in params.enc_b],
            "attn_q": _nested(params.attn_q),
            "head_w": _nested(params.head_w),
            "head_b": _nested(params.head_b),
            "log_var": _nested(params.log_var),
        },
        "optimizer": None
        if opt_state is None
        else {
            "m": opt_state.m.tolist(),
            "v": opt_state.v.tolist(),
            "step": opt_state.step,
            "lr": opt_state.lr,
            "beta1": opt_state.beta1,
            "beta2": opt_state.beta2,
            "eps": opt_state.eps,
        },
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[ModelParams, OptimizerState | None, dict]:
    """Parse and validate a checkpoint written by save_checkpoint."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FileFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"checkpoint {path} is not valid JSON: {exc.msg}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise FileFormatError(f"checkpoint {path} has an unsupported format header")
    try:
        model = doc["model"]
        raw = doc["params"]
        config = ModelConfig(tuple(model["feature_dims"]), int(model["hidden_dim"]))
        log_var_raw = raw.get("log_var")
        params = ModelParams(
            enc_w=[np.asarray(w, dtype=np.float64) for w in raw["enc_w"]],
            enc_b=[np.asarray(b, dtype=np.float64) for b in raw["enc_b"]],
            attn_q=np.asarray(raw["attn_q"], dtype=np.float64),
            head_w=np.asarray(raw["head_w"], dtype=np.float64),
            head_b=np.asarray(raw["head_b"], dtype=np.float64),
            log_var=None if log_var_raw is None else np.asarray(log_var_raw, dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"checkpoint {path} has malformed fields: {exc}") from exc
    h = config.hidden_dim
    expected = {
        "enc_w": [(h, d) for d in config.feature_dims],
        "attn_q": (N_TASKS, h),
        "head_w": (N_TASKS, N_CLASSES, h),
        "head_b": (N_TASKS, N_CLASSES),
    }
    if [w.shape for w in params.enc_w] != expected["enc_w"] or [
        b.shape for b in params.enc_b
    ] != [(h,)] * 3:
        raise FileFormatError(f"checkpoint {path}: encoder shapes disagree with model config")
    for name in ("attn_q", "head_w", "head_b"):
        if getattr(params, name).shape != expected[name]:
            raise FileFormatError(f"checkpoint {path}: {name} shape disagrees with model config")
    if params.uncertainty != model.get("uncertainty"):
        raise FileFormatError(f"checkpoint {path}: log_var shape disagrees with declared kind")
    if not np.all(np.isfinite(to_vector(params))):
        raise FileFormatError(f"checkpoint {path}: parameters contain non-finite values")
    opt = doc.get("optimizer")
    opt_state = None
    if opt is not None:
        try:
            opt_state = OptimizerState(
                m=np.asarray(opt["m"], dtype=np.float64),
                v=np.asarray(opt["v"], dtype=np.float64),
                step=int(opt["step"]),
                lr=float(opt["lr"]),
                beta1=float(opt["beta1"]),
                beta2=float(opt["beta2"]),
                eps=float(opt["eps"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"checkpoint {path} has malformed optimizer state: {exc}") from exc
        n = to_vector(params).size
        if opt_state.m.shape != (n,) or opt_state.v.shape != (n,):
            raise FileFormatError(f"checkpoint {path}: optimizer moment length mismatch")
    meta = doc.get("meta") or {}
    return params, opt_state, meta

"""Questionnaire primitives: subitem scores, outcomes, and soft labels.

A participant answers 8 subitems, each scored on the ordinal scale 0..3.
The total score is the plain sum (0..24) and the binary screening outcome
is positive exactly when the total reaches DEPRESSION_THRESHOLD.

Ordinal targets are smoothed into 4-bin probability vectors with a
discretized Gaussian centred on the true score, so that near-miss
predictions are penalised less than distant ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

N_TASKS = 8
N_CLASSES = 4
DEPRESSION_THRESHOLD = 10
DEFAULT_SIGMA_G = 0.5

# sigma below this is treated as the degenerate one-hot limit
_SIGMA_DEGENERATE = 1e-8


class GroupLabel(str, enum.Enum):
    """Demographic group tag carried by every participant record."""

    S0 = "s0"
    S1 = "s1"

    @property
    def index(self) -> int:
        return 0 if self is GroupLabel.S0 else 1


def validate_scores(scores: np.ndarray) -> np.ndarray:
    """Coerce to an int64 vector of 8 subitem scores, rejecting bad values."""
    arr = np.asarray(scores)
    if arr.shape != (N_TASKS,):
        raise InputError(f"expected {N_TASKS} subitem scores, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.floor(arr)):
            raise InputError("subitem scores must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > N_CLASSES - 1:
        raise InputError(f"subitem scores must lie in 0..{N_CLASSES - 1}")
    return arr


def total_score(scores: np.ndarray) -> int:
    """Sum of the 8 subitem scores, in 0..24."""
    return int(validate_scores(scores).sum())


def binary_outcome(ts: int) -> int:
    """1 when the total score reaches the screening threshold, else 0."""
    if not 0 <= ts <= N_TASKS * (N_CLASSES - 1):
        raise InputError(f"total score {ts} outside 0..{N_TASKS * (N_CLASSES - 1)}")
    return int(ts >= DEPRESSION_THRESHOLD)


def soft_label(score: int, sigma_g: float = DEFAULT_SIGMA_G) -> np.ndarray:
    """Discretized Gaussian over the 4 score bins, centred on `score`.

    Weights exp(-(k - score)^2 / (2 sigma_g^2)) for k in 0..3 are normalised
    to sum to one. sigma_g below 1e-8 yields the exact one-hot limit.
    Negative sigma_g is rejected.
    """
    if score not in (0, 1, 2, 3):
        raise InputError(f"score {score} outside 0..{N_CLASSES - 1}")
    if sigma_g < 0:
        raise InputError(f"sigma_g must be non-negative, got {sigma_g}")
    if sigma_g < _SIGMA_DEGENERATE:
        out = np.zeros(N_CLASSES)
        out[score] = 1.0
        return out
    k = np.arange(N_CLASSES, dtype=np.float64)
    w = np.exp(-((k - float(score)) ** 2) / (2.0 * sigma_g * sigma_g))
    # summing the sorted weights makes mirrored scores normalise by the
    # bit-identical constant, so reversal symmetry holds exactly
    return w / np.sort(w).sum()


def soft_label_table(sigma_g: float = DEFAULT_SIGMA_G) -> np.ndarray:
    """(4, 4) table whose row y is soft_label(y, sigma_g)."""
    return np.stack([soft_label(y, sigma_g) for y in range(N_CLASSES)])


@dataclass(eq=False)
class ParticipantRecord:
    """One synthetic participant: id, group, three feature vectors, scores."""

    record_id: str
    group: GroupLabel
    audio: np.ndarray
    visual: np.ndarray
    text: np.ndarray
    scores: np.ndarray

    def __post_init__(self) -> None:
        self.scores = validate_scores(self.scores)
        for name in ("audio", "visual", "text"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise InputError(f"{name} features must be a 1-d vector")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} features contain non-finite values")
            setattr(self, name, arr)

    @property
    def total(self) -> int:
        return int(self.scores.sum())

    @property
    def outcome(self) -> int:
        return binary_outcome(self.total)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParticipantRecord):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.group == other.group
            and np.array_equal(self.audio, other.audio)
            and np.array_equal(self.visual, other.visual)
            and np.array_equal(self.text, other.text)
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(eq=False)
class Cohort:
    """A list of participant records plus the hash of the producing config."""

    records: list[ParticipantRecord] = field(default_factory=list)
    config_hash: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        return self.config_hash == other.config_hash and self.records == other.records

    @property
    def feature_dims(self) -> tuple[int, int, int]:
        if not self.records:
            raise InputError("empty cohort has no feature dimensions")
        r = self.records[0]
        return (len(r.audio), len(r.visual), len(r.text))

    def group_counts(self) -> dict[str, int]:
        counts = {g.value: 0 for g in GroupLabel}
        for r in self.records:
            counts[r.group.value] += 1
        return counts

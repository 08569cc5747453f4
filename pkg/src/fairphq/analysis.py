"""Task-difficulty profiles and their agreement with discrimination capacity.

A model trained with uncertainty weighting learns one log-variance per
task (or per group and task). The precision weights 1/sigma^2 =
exp(-log_var) act as a learned difficulty profile: tasks the optimiser
finds easy keep high precision. This module compares such profiles
against a fixed reference column of per-task discrimination capacities
(in bits) via rank statistics, so conclusions depend only on orderings,
never on raw magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import N_TASKS
from .errors import InputError, ModeError
from .net import ModelParams

# fixed per-task discrimination-capacity reference, in bits
DISCRIMINATION_CAPACITY = np.array([3.06, 3.42, 1.91, 2.67, 2.22, 2.86, 2.55, 2.43])
DISCRIMINATION_CAPACITY.setflags(write=False)

TOP_K = 3
BOTTOM_K = 2


@dataclass(frozen=True)
class DifficultyProfile:
    """Learned precision weights: (8,) per task or (2, 8) per group."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape not in ((N_TASKS,), (2, N_TASKS)):
            raise InputError(f"profile must be ({N_TASKS},) or (2, {N_TASKS}), got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InputError("precision weights must be finite and positive")
        object.__setattr__(self, "values", v)

    @property
    def per_group(self) -> bool:
        return self.values.ndim == 2

    def rows(self) -> list[tuple]:
        """(task, value) or (task, group, value) tuples, tasks numbered from 1."""
        if not self.per_group:
            return [(t + 1, float(self.values[t])) for t in range(N_TASKS)]
        out = []
        for g, tag in enumerate(("s0", "s1")):
            for t in range(N_TASKS):
                out.append((t + 1, tag, float(self.values[g, t])))
        return out


def difficulty_profile(params: ModelParams) -> DifficultyProfile:
    """Extract exp(-log_var) from a model that trained log-variances."""
    if params.log_var is None:
        raise ModeError("model carries no trained log-variances; train with uw or ufair")
    return DifficultyProfile(values=np.exp(-params.log_var))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j < x.size and x[order[j]] == x[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0  # 1-based, ties share the mean rank
        i = j
    return ranks


def spearman(a: np.ndarray, b: np.ndarray) -> float | None:
    """Rank correlation with average ranks for ties.

    Returns None (Undefined) when either input is constant, since rank
    variance vanishes there.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise InputError(f"expected two equal-length vectors of size >= 2, got {a.shape} and {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputError("inputs must be finite")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return None
    return float((da * db).sum() / denom)


def top_indices(values: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest values; ties resolve to the lowest index."""
    n = len(values)
    if not 0 < k <= n:
        raise InputError(f"k must lie in 1..{n}, got {k}")
    return tuple(sorted(range(n), key=lambda i: (-values[i], i))[:k])


def bottom_indices(values: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k smallest values; ties resolve to the lowest index."""
    n = len(values)
    if not 0 < k <= n:
        raise InputError(f"k must lie in 1..{n}, got {k}")
    return tuple(sorted(range(n), key=lambda i: (values[i], i))[:k])


@dataclass(frozen=True)
class DCReport:
    """Side-by-side ranking of a difficulty profile against the reference."""

    profile: np.ndarray
    reference: np.ndarray
    rho: float | None
    top_profile: tuple[int, ...]
    bottom_profile: tuple[int, ...]
    top_reference: tuple[int, ...]
    bottom_reference: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "profile": self.profile.tolist(),
            "reference": self.reference.tolist(),
            "spearman_rho": self.rho,
            "top_profile_tasks": [i + 1 for i in self.top_profile],
            "bottom_profile_tasks": [i + 1 for i in self.bottom_profile],
            "top_reference_tasks": [i + 1 for i in self.top_reference],
            "bottom_reference_tasks": [i + 1 for i in self.bottom_reference],
        }

    def rows(self) -> list[tuple]:
        """Per-task CSV rows: task, reference, profile, marks for each."""
        out = []
        for t in range(N_TASKS):
            out.append(
                (
                    t + 1,
                    float(self.reference[t]),
                    float(self.profile[t]),
                    _mark(t, self.top_reference, self.bottom_reference),
                    _mark(t, self.top_profile, self.bottom_profile),
                )
            )
        return out


def _mark(t: int, top: tuple[int, ...], bottom: tuple[int, ...]) -> str:
    if t in top:
        return "top"
    if t in bottom:
        return "bottom"
    return ""


def dc_report(
    profile: np.ndarray,
    reference: np.ndarray | None = None,
    top_k: int = TOP_K,
    bottom_k: int = BOTTOM_K,
) -> DCReport:
    """Rank a per-task profile against the discrimination-capacity column.

    Markings and rho depend only on value orderings: any strictly
    increasing transform of the profile leaves the report's rankings
    unchanged.
    """
    prof = np.asarray(profile, dtype=np.float64)
    ref = DISCRIMINATION_CAPACITY if reference is None else np.asarray(reference, dtype=np.float64)
    if prof.shape != (N_TASKS,) or ref.shape != (N_TASKS,):
        raise InputError(f"profile and reference must both have shape ({N_TASKS},)")
    if not (np.all(np.isfinite(prof)) and np.all(np.isfinite(ref))):
        raise InputError("profile and reference must be finite")
    return DCReport(
        profile=prof,
        reference=ref,
        rho=spearman(ref, prof),
        top_profile=top_indices(prof, top_k),
        bottom_profile=bottom_indices(prof, bottom_k),
        top_reference=top_indices(ref, top_k),
        bottom_reference=bottom_indices(ref, bottom_k),
    )

"""Binary screening metrics, group-fairness ratios, and Pareto analysis.

Fairness is expressed as s0-over-s1 ratios of group-conditional rates:
positive-prediction rate (statistical parity), true-positive rate (equal
opportunity), the pair of true- and false-positive-rate ratios (equalized
odds), and accuracy. Conventions for degenerate cases, applied uniformly:

  0 / 0                -> 1.0 (both groups identical at zero)
  x / 0 with x > 0     -> Undefined (represented as None)
  empty conditioning   -> the underlying rate is Undefined, so the ratio
  set for either group    is Undefined too

Undefined propagates through normalisation and bounds checks as None.
Perfect parity is 1.0; the normalised form min(r, 1/r) folds both
directions of disparity onto [0, 1] with 1.0 best.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Cohort, GroupLabel
from .errors import InputError

FAIRNESS_BOUNDS = (0.80, 1.20)
EODD_AGGREGATES = ("mean", "worst")
FAIRNESS_METRICS = ("m_sp", "m_eopp", "m_eodd", "m_eacc")


@dataclass(frozen=True)
class LabeledPrediction:
    """One record's group tag, true binary outcome, and predicted outcome."""

    group: GroupLabel
    y_true: int
    y_hat: int

    def __post_init__(self) -> None:
        if self.y_true not in (0, 1) or self.y_hat not in (0, 1):
            raise InputError("y_true and y_hat must both be 0 or 1")
        if not isinstance(self.group, GroupLabel):
            raise InputError(f"group must be a GroupLabel, got {type(self.group).__name__}")


def label_predictions(cohort: Cohort, binary_hat: np.ndarray) -> list[LabeledPrediction]:
    """Zip a cohort's true outcomes with predicted ones."""
    binary_hat = np.asarray(binary_hat)
    if binary_hat.shape != (len(cohort),):
        raise InputError("binary_hat length does not match the cohort")
    return [
        LabeledPrediction(group=r.group, y_true=r.outcome, y_hat=int(h))
        for r, h in zip(cohort.records, binary_hat)
    ]


def _arrays(preds: list[LabeledPrediction]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not preds:
        raise InputError("prediction list is empty")
    groups = np.array([p.group.index for p in preds], dtype=np.int64)
    y = np.array([p.y_true for p in preds], dtype=np.int64)
    y_hat = np.array([p.y_hat for p in preds], dtype=np.int64)
    return groups, y, y_hat


@dataclass(frozen=True)
class PerformanceReport:
    """Standard binary metrics; the positive class is a positive screen."""

    accuracy: float
    f1: float
    precision: float
    recall: float
    uar: float

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "uar": self.uar,
        }


def performance_metrics(preds: list[LabeledPrediction]) -> PerformanceReport:
    """Accuracy, F1, precision, recall, and unweighted average recall.

    Zero-division conventions: precision is 0 when nothing is predicted
    positive; a class absent from the truth contributes recall 0 (both to
    `recall` and to its UAR term).
    """
    _, y, y_hat = _arrays(preds)
    tp = int(np.sum((y == 1) & (y_hat == 1)))
    tn = int(np.sum((y == 0) & (y_hat == 0)))
    fp = int(np.sum((y == 0) & (y_hat == 1)))
    fn = int(np.sum((y == 1) & (y_hat == 0)))
    accuracy = (tp + tn) / len(y)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall_pos = tp / (tp + fn) if tp + fn else 0.0
    recall_neg = tn / (tn + fp) if tn + fp else 0.0
    f1 = 2 * precision * recall_pos / (precision + recall_pos) if precision + recall_pos else 0.0
    return PerformanceReport(
        accuracy=accuracy,
        f1=f1,
        precision=precision,
        recall=recall_pos,
        uar=0.5 * (recall_pos + recall_neg),
    )


def subscore_accuracy(scores_true: np.ndarray, scores_hat: np.ndarray) -> np.ndarray:
    """Per-task exact-match rate between true and predicted subitem scores."""
    scores_true = np.asarray(scores_true)
    scores_hat = np.asarray(scores_hat)
    if scores_true.shape != scores_hat.shape or scores_true.ndim != 2:
        raise InputError("score arrays must be matching (n, T) matrices")
    if scores_true.shape[0] == 0:
        raise InputError("score arrays are empty")
    return (scores_true == scores_hat).mean(axis=0)


def _rate(hits: int, base: int) -> float | None:
    return None if base == 0 else hits / base


def _ratio(num: float | None, den: float | None) -> float | None:
    if num is None or den is None:
        return None
    if den == 0.0:
        return 1.0 if num == 0.0 else None
    return num / den


def normalize_fairness(ratio: float | None) -> float | None:
    """Fold an s0/s1 ratio onto [0, 1], 1.0 meaning perfect parity."""
    if ratio is None:
        return None
    if ratio < 0:
        raise InputError(f"fairness ratios cannot be negative, got {ratio}")
    if ratio == 0.0:
        return 0.0
    return min(ratio, 1.0 / ratio)


def within_bounds(
    ratio: float | None, bounds: tuple[float, float] = FAIRNESS_BOUNDS
) -> bool | None:
    """Whether a raw ratio sits inside the accepted disparity band."""
    if ratio is None:
        return None
    return bounds[0] <= ratio <= bounds[1]


@dataclass(frozen=True)
class RatioReport:
    """One fairness ratio in raw, normalised, and bounds-checked form."""

    raw: float | None
    normalized: float | None
    bounded: bool | None


def _report(raw: float | None, bounds: tuple[float, float]) -> RatioReport:
    return RatioReport(raw=raw, normalized=normalize_fairness(raw), bounded=within_bounds(raw, bounds))


@dataclass(frozen=True)
class FairnessReport:
    """The four ratios plus the two equalized-odds components."""

    m_sp: RatioReport
    m_eopp: RatioReport
    m_eodd: RatioReport
    m_eacc: RatioReport
    eodd_y1: float | None
    eodd_y0: float | None

    def ratio(self, name: str) -> RatioReport:
        if name not in FAIRNESS_METRICS:
            raise InputError(f"unknown fairness metric {name!r}")
        return getattr(self, name)


def fairness_ratios(
    preds: list[LabeledPrediction],
    eodd_aggregate: str = "mean",
    bounds: tuple[float, float] = FAIRNESS_BOUNDS,
) -> FairnessReport:
    """Group-conditional ratio metrics for a labelled prediction set.

    Both groups must appear in `preds`. The equalized-odds aggregate is
    the arithmetic mean of the y=1 and y=0 rate ratios by default, or the
    component farther from 1.0 with eodd_aggregate="worst"; both
    components are always reported alongside.
    """
    if eodd_aggregate not in EODD_AGGREGATES:
        raise InputError(f"eodd_aggregate must be one of {EODD_AGGREGATES}")
    groups, y, y_hat = _arrays(preds)
    if not ((groups == 0).any() and (groups == 1).any()):
        raise InputError("both groups must be present to compute fairness ratios")

    pos_rate: list[float | None] = []
    tpr: list[float | None] = []
    fpr: list[float | None] = []
    acc: list[float | None] = []
    for g in (0, 1):
        mask = groups == g
        yg, hg = y[mask], y_hat[mask]
        pos_rate.append(_rate(int((hg == 1).sum()), int(mask.sum())))
        tpr.append(_rate(int(((hg == 1) & (yg == 1)).sum()), int((yg == 1).sum())))
        fpr.append(_rate(int(((hg == 1) & (yg == 0)).sum()), int((yg == 0).sum())))
        acc.append(_rate(int((hg == yg).sum()), int(mask.sum())))

    m_sp = _ratio(pos_rate[0], pos_rate[1])
    eodd_y1 = _ratio(tpr[0], tpr[1])
    eodd_y0 = _ratio(fpr[0], fpr[1])
    m_eacc = _ratio(acc[0], acc[1])
    if eodd_y1 is None or eodd_y0 is None:
        m_eodd = None
    elif eodd_aggregate == "mean":
        m_eodd = 0.5 * (eodd_y1 + eodd_y0)
    else:
        m_eodd = eodd_y1 if abs(eodd_y1 - 1.0) >= abs(eodd_y0 - 1.0) else eodd_y0

    return FairnessReport(
        m_sp=_report(m_sp, bounds),
        m_eopp=_report(eodd_y1, bounds),
        m_eodd=_report(m_eodd, bounds),
        m_eacc=_report(m_eacc, bounds),
        eodd_y1=eodd_y1,
        eodd_y0=eodd_y0,
    )


@dataclass(frozen=True)
class ParetoPoint:
    """A method's position in the accuracy-fairness plane, both in [0, 1]."""

    method_id: str
    accuracy: float
    fairness: float

    def __post_init__(self) -> None:
        for name, v in (("accuracy", self.accuracy), ("fairness", self.fairness)):
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {v}")


def pareto_frontier(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset, maximising accuracy and fairness jointly.

    A point is dominated when another point is at least as good on both
    axes and strictly better on one. Exact duplicates of a frontier point
    all survive. Output preserves input order. Callers exclude points
    whose fairness is Undefined before building the frontier.
    """
    if not points:
        raise InputError("cannot build a frontier from an empty point set")
    n = len(points)
    order = sorted(range(n), key=lambda i: -points[i].accuracy)
    keep = [False] * n
    best_strict = -np.inf  # max fairness over strictly more accurate points
    i = 0
    while i < n:
        j = i
        while j < n and points[order[j]].accuracy == points[order[i]].accuracy:
            j += 1
        tier = order[i:j]
        tier_max = max(points[idx].fairness for idx in tier)
        if tier_max > best_strict:
            for idx in tier:
                if points[idx].fairness == tier_max:
                    keep[idx] = True
        best_strict = max(best_strict, tier_max)
        i = j
    return [p for p, k in zip(points, keep) if k]

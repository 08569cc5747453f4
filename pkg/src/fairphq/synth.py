"""Deterministic synthetic cohorts and their JSONL serialisation.

Generation is driven entirely by a CohortConfig and a counter-based
Philox stream seeded from config.seed, so equal configs give byte-equal
datasets on every platform. Draw order, which is part of the format
contract and must not change:

  1. one (d_m, 8) standard-normal matrix per modality, scaled by 1/sqrt(8),
     in the order audio, visual, text (the fixed score-to-signal maps)
  2. per record, in id order: one uniform for the group assignment, one
     batch of 8 uniforms for the subitem scores, then one standard-normal
     vector per modality in the order audio, visual, text

Scores are sampled from per-group, per-task marginals by inverting the
cumulative distribution with searchsorted. Features are a linear encoding
of the score vector plus group-scaled Gaussian noise:

  x_m = signal_scale * (E_m @ y) + noise_scale[group] * eps

The dataset file is JSON lines: one header object followed by one object
per record. Floats round-trip exactly through repr, so read(write(c)) == c.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import Cohort, GroupLabel, N_CLASSES, N_TASKS, ParticipantRecord
from .errors import ConfigError, DatasetFormatError

FORMAT_NAME = "fairphq-cohort"
FORMAT_VERSION = 1

# editable defaults: discretized Gaussians over the 4 bins, with the s0
# group shifted toward slightly higher scores than s1
_BASE_MEANS = (1.2, 1.3, 0.9, 1.1, 0.8, 1.0, 0.9, 1.2)
_GROUP_SHIFT = (0.1, 0.0)
_MARGINAL_WIDTH = 1.0


def discretized_gaussian_marginal(mean: float, width: float = _MARGINAL_WIDTH) -> np.ndarray:
    """Probabilities over the 4 score bins from a Gaussian bump at `mean`."""
    if width <= 0:
        raise ConfigError(f"marginal width must be positive, got {width}")
    k = np.arange(N_CLASSES, dtype=np.float64)
    w = np.exp(-((k - mean) ** 2) / (2.0 * width * width))
    return w / w.sum()


def default_score_marginals() -> np.ndarray:
    """(2, 8, 4) default score distributions per group and task."""
    out = np.empty((2, N_TASKS, N_CLASSES))
    for g in range(2):
        for t in range(N_TASKS):
            out[g, t] = discretized_gaussian_marginal(_BASE_MEANS[t] + _GROUP_SHIFT[g])
    return out


@dataclass(frozen=True)
class CohortConfig:
    """Everything that determines a synthetic cohort, including the seed."""

    n: int
    seed: int = 0
    group_fraction_s0: float = 0.5
    feature_dims: tuple[int, int, int] = (20, 20, 20)
    signal_scale: float = 1.0
    noise_scale: tuple[float, float] = (1.0, 1.0)
    score_marginals: np.ndarray = field(default_factory=default_score_marginals)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"cohort size must be at least 1, got {self.n}")
        if not 0.0 < self.group_fraction_s0 < 1.0:
            raise ConfigError(
                f"group_fraction_s0 must lie strictly in (0, 1), got {self.group_fraction_s0}"
            )
        if len(self.feature_dims) != 3 or any(d < 1 for d in self.feature_dims):
            raise ConfigError(f"feature_dims must be three positive ints, got {self.feature_dims}")
        if self.signal_scale < 0 or not np.isfinite(self.signal_scale):
            raise ConfigError(f"signal_scale must be finite and non-negative, got {self.signal_scale}")
        if len(self.noise_scale) != 2 or any(s < 0 or not np.isfinite(s) for s in self.noise_scale):
            raise ConfigError(f"noise_scale must be two non-negative floats, got {self.noise_scale}")
        marg = np.asarray(self.score_marginals, dtype=np.float64)
        if marg.shape != (2, N_TASKS, N_CLASSES):
            raise ConfigError(f"score_marginals must be (2, {N_TASKS}, {N_CLASSES}), got {marg.shape}")
        if np.any(marg < 0) or not np.all(np.isfinite(marg)):
            raise ConfigError("score_marginals must be finite and non-negative")
        if np.any(np.abs(marg.sum(axis=-1) - 1.0) > 1e-9):
            raise ConfigError("each score_marginals row must sum to 1 within 1e-9")
        object.__setattr__(self, "score_marginals", marg)
        object.__setattr__(self, "feature_dims", tuple(int(d) for d in self.feature_dims))
        object.__setattr__(self, "noise_scale", tuple(float(s) for s in self.noise_scale))

    def canonical_dict(self) -> dict:
        """JSON-ready dict with a fixed key set, used for hashing."""
        return {
            "n": self.n,
            "seed": self.seed,
            "group_fraction_s0": self.group_fraction_s0,
            "feature_dims": list(self.feature_dims),
            "signal_scale": self.signal_scale,
            "noise_scale": list(self.noise_scale),
            "score_marginals": self.score_marginals.tolist(),
        }

    def hash(self) -> str:
        return hash_canonical(self.canonical_dict())


def hash_canonical(obj: dict) -> str:
    """sha256 hex digest of an object's canonical JSON encoding."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def generate_cohort(config: CohortConfig) -> Cohort:
    """Sample a cohort from `config`, deterministically in the seed."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
    encoders = [
        rng.standard_normal((d, N_TASKS)) / np.sqrt(N_TASKS) for d in config.feature_dims
    ]
    cum = np.cumsum(config.score_marginals, axis=-1)
    cum[..., -1] = 1.0  # guard the searchsorted upper edge against rounding
    records = []
    for i in range(config.n):
        g = 0 if rng.random() < config.group_fraction_s0 else 1
        u = rng.random(N_TASKS)
        scores = np.empty(N_TASKS, dtype=np.int64)
        for t in range(N_TASKS):
            scores[t] = np.searchsorted(cum[g, t], u[t], side="right")
        y = scores.astype(np.float64)
        feats = []
        for m, d in enumerate(config.feature_dims):
            eps = rng.standard_normal(d)
            feats.append(config.signal_scale * (encoders[m] @ y) + config.noise_scale[g] * eps)
        records.append(
            ParticipantRecord(
                record_id=f"p{i:06d}",
                group=GroupLabel.S0 if g == 0 else GroupLabel.S1,
                audio=feats[0],
                visual=feats[1],
                text=feats[2],
                scores=scores,
            )
        )
    return Cohort(records=records, config_hash=config.hash())


def write_dataset(cohort: Cohort, path: str) -> None:
    """Write a cohort as JSONL: one header line, then one line per record."""
    dims = list(cohort.feature_dims) if cohort.records else [0, 0, 0]
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n": len(cohort),
        "feature_dims": dims,
        "config_hash": cohort.config_hash,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for r in cohort.records:
            line = {
                "id": r.record_id,
                "group": r.group.value,
                "scores": r.scores.tolist(),
                "audio": r.audio.tolist(),
                "visual": r.visual.tolist(),
                "text": r.text.tolist(),
            }
            fh.write(json.dumps(line) + "\n")


def _parse_line(path: str, line_no: int, raw: str) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(path, line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise DatasetFormatError(path, line_no, "expected a JSON object")
    return obj


def read_dataset(path: str) -> Cohort:
    """Parse a JSONL cohort file, validating structure and value ranges."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DatasetFormatError(path, 0, f"cannot read file: {exc}") from exc
    if not lines:
        raise DatasetFormatError(path, 0, "empty file, expected a header line")
    header = _parse_line(path, 1, lines[0])
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(path, 1, "missing or unsupported format header")
    dims = header.get("feature_dims")
    n = header.get("n")
    if not isinstance(n, int) or n < 0:
        raise DatasetFormatError(path, 1, "header field 'n' must be a non-negative int")
    if not (isinstance(dims, list) and len(dims) == 3 and all(isinstance(d, int) for d in dims)):
        raise DatasetFormatError(path, 1, "header field 'feature_dims' must be three ints")
    records = []
    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            raise DatasetFormatError(path, line_no, "blank line inside dataset")
        obj = _parse_line(path, line_no, raw)
        missing = {"id", "group", "scores", "audio", "visual", "text"} - obj.keys()
        if missing:
            raise DatasetFormatError(path, line_no, f"missing fields: {sorted(missing)}")
        if obj["group"] not in (GroupLabel.S0.value, GroupLabel.S1.value):
            raise DatasetFormatError(path, line_no, f"unknown group {obj['group']!r}")
        try:
            record = ParticipantRecord(
                record_id=str(obj["id"]),
                group=GroupLabel(obj["group"]),
                audio=np.asarray(obj["audio"], dtype=np.float64),
                visual=np.asarray(obj["visual"], dtype=np.float64),
                text=np.asarray(obj["text"], dtype=np.float64),
                scores=np.asarray(obj["scores"]),
            )
        except (ValueError, TypeError) as exc:
            raise DatasetFormatError(path, line_no, str(exc)) from exc
        feat_lens = (len(record.audio), len(record.visual), len(record.text))
        if list(feat_lens) != dims:
            raise DatasetFormatError(
                path, line_no, f"feature lengths {feat_lens} do not match header {dims}"
            )
        records.append(record)
    if len(records) != n:
        raise DatasetFormatError(path, 0, f"header announces {n} records, file has {len(records)}")
    return Cohort(records=records, config_hash=str(header.get("config_hash", "")))


def file_sha256(path: str) -> str:
    """Content hash of a file, used to tie runs to their dataset."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

"""Group-aware uncertainty-weighted multitask screening on synthetic cohorts.

The package trains small multimodal multitask models that predict the 8
ordinal subitem scores of a depression questionnaire, derives the binary
screening outcome from the summed scores, and measures how training
objectives trade accuracy against demographic-parity style fairness
ratios between two groups. Cohorts are synthetic and fully determined by
a seeded configuration, so every experiment is reproducible end to end.
"""

from .analysis import DISCRIMINATION_CAPACITY, DCReport, dc_report, difficulty_profile, spearman
from .backend import active_backend
from .core import (
    Cohort,
    DEPRESSION_THRESHOLD,
    GroupLabel,
    ParticipantRecord,
    binary_outcome,
    soft_label,
    total_score,
)
from .errors import (
    ConfigError,
    DatasetFormatError,
    FairPHQError,
    FileFormatError,
    InputError,
    ModeError,
    NumericError,
    TrainingDivergedError,
)
from .evaluation import (
    FairnessReport,
    LabeledPrediction,
    ParetoPoint,
    PerformanceReport,
    fairness_ratios,
    label_predictions,
    normalize_fairness,
    pareto_frontier,
    performance_metrics,
)
from .losses import LossSpec, kl_loss, mtl_loss, ufair_loss, unitask_loss, uw_loss
from .net import ModelConfig, ModelParams, init_params, load_checkpoint, save_checkpoint
from .synth import CohortConfig, generate_cohort, read_dataset, write_dataset
from .train import TrainConfig, predict, split_cohort, train_unitask_suite

__version__ = "0.1.0"

__all__ = [
    "DISCRIMINATION_CAPACITY",
    "DCReport",
    "dc_report",
    "difficulty_profile",
    "spearman",
    "active_backend",
    "Cohort",
    "DEPRESSION_THRESHOLD",
    "GroupLabel",
    "ParticipantRecord",
    "binary_outcome",
    "soft_label",
    "total_score",
    "ConfigError",
    "DatasetFormatError",
    "FairPHQError",
    "FileFormatError",
    "InputError",
    "ModeError",
    "NumericError",
    "TrainingDivergedError",
    "FairnessReport",
    "LabeledPrediction",
    "ParetoPoint",
    "PerformanceReport",
    "fairness_ratios",
    "label_predictions",
    "normalize_fairness",
    "pareto_frontier",
    "performance_metrics",
    "LossSpec",
    "kl_loss",
    "mtl_loss",
    "ufair_loss",
    "unitask_loss",
    "uw_loss",
    "ModelConfig",
    "ModelParams",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "CohortConfig",
    "generate_cohort",
    "read_dataset",
    "write_dataset",
    "TrainConfig",
    "predict",
    "split_cohort",
    "train_unitask_suite",
    "__version__",
]

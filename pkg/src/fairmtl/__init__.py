"""Fairness-aware multi-task learning with a loss-selecting DQN teacher."""

from .data import Dataset, Splits, SynthSpec, batches, generate_synthetic, load_csv, split, write_csv
from .losses import Action
from .metrics import MetricsReport, accuracy, confusion_by_group, eo_violation, relative_report
from .trainer import (
    TrainConfig,
    TrainedModel,
    evaluate,
    train,
    train_fixed,
    train_gfmt,
    train_l2tfmt,
    train_stl,
    train_vanilla,
)

__version__ = "0.1.0"

"""Temporal refinement of jittery pose sequences and low-pass baselines."""
from .data import MotionSpec, NoiseSpec, PoseSequence, load_sequence, make_dataset, save_sequence
from .filters import FilterSpec, apply_filter
from .metrics import MetricsReport, evaluate
from .model import Checkpoint, SmoothNetConfig, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, evaluate_checkpoint, train
from .windowing import smooth_sequence

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "FilterSpec",
    "MetricsReport",
    "MotionSpec",
    "NoiseSpec",
    "PoseSequence",
    "SmoothNetConfig",
    "TrainConfig",
    "apply_filter",
    "evaluate",
    "evaluate_checkpoint",
    "load_checkpoint",
    "load_sequence",
    "make_dataset",
    "save_checkpoint",
    "save_sequence",
    "smooth_sequence",
    "train",
]

"""Toy training lab: tape autodiff, CSP/MHA formers, synthetic tasks, SGD."""

from .autodiff import BackwardError, Tape, backward
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .models import (
    ModelSpec,
    attention_param_count,
    forward_model,
    init_params,
    matched_mha_dim,
    param_count,
)
from .tasks import Batch, SyntheticTask
from .trainer import (
    METRICS_COLUMNS,
    DivergenceError,
    GradCheck,
    TrainConfig,
    TrainResult,
    gradient_check,
    train,
)

__all__ = [
    "BackwardError",
    "Tape",
    "backward",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
    "ModelSpec",
    "attention_param_count",
    "forward_model",
    "init_params",
    "matched_mha_dim",
    "param_count",
    "Batch",
    "SyntheticTask",
    "METRICS_COLUMNS",
    "DivergenceError",
    "GradCheck",
    "TrainConfig",
    "TrainResult",
    "gradient_check",
    "train",
]

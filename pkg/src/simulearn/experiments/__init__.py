"""Experiment configuration, orchestration, and plotting."""

from .config import (
    DirectoryConfig,
    ExperimentConfig,
    InterpretParams,
    ModeSpec,
    ModelConfig,
    TrainParams,
    load_config,
)
from .plotting import Series, emit_plot, render_plot
from .runner import (
    RunResult,
    build_dataset,
    evaluate_checkpoint,
    execute_run,
    interpret_export,
    lambda_sweep,
    reduce_target_train,
    run_experiment,
)

__all__ = [
    "DirectoryConfig",
    "ExperimentConfig",
    "InterpretParams",
    "ModeSpec",
    "ModelConfig",
    "TrainParams",
    "load_config",
    "Series",
    "emit_plot",
    "render_plot",
    "RunResult",
    "build_dataset",
    "evaluate_checkpoint",
    "execute_run",
    "interpret_export",
    "lambda_sweep",
    "reduce_target_train",
    "run_experiment",
]

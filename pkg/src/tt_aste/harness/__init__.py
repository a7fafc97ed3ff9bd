"""Training, evaluation, benchmarking and ablation on top of the model."""

from .ablate import VARIANTS, ablate, ablation_csv
from .bench import CSV_COLUMNS, DEFAULT_SWEEP, bench, parse_sweep, rows_to_csv
from .checkpoint import MAGIC, Checkpoint, CheckpointError
from .config import RunConfig, apply_env, long_distance_overrides
from .evaluate import DEFAULT_EVAL_BUCKETS, EvalReport, evaluate_predictions, prf
from .train import (
    Splits,
    TrainResult,
    build_model,
    evaluate,
    evaluate_model,
    load_splits,
    make_batches,
    model_from_checkpoint,
    predict_corpus,
    train,
)

__all__ = [
    "VARIANTS", "ablate", "ablation_csv",
    "CSV_COLUMNS", "DEFAULT_SWEEP", "bench", "parse_sweep", "rows_to_csv",
    "MAGIC", "Checkpoint", "CheckpointError",
    "RunConfig", "apply_env", "long_distance_overrides",
    "DEFAULT_EVAL_BUCKETS", "EvalReport", "evaluate_predictions", "prf",
    "Splits", "TrainResult", "build_model", "evaluate", "evaluate_model", "load_splits", "make_batches",
    "model_from_checkpoint", "predict_corpus", "train",
]

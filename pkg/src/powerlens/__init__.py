"""CPU power models from frequency/utilization traces, calibrated with consumer power meters."""
from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (
    EvalMetrics,
    MeasurementRecord,
    ModelKind,
    PowerModel,
    Utilization,
    eval_polynomial,
    evaluate_model,
    mae,
    mse,
    predict,
    r2_score,
)
from .learners import FitConfig, fit
from .modelio import load as load_model
from .modelio import save as save_model

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "EvalMetrics", "MeasurementRecord", "ModelKind", "PowerModel", "Utilization",
    "eval_polynomial", "evaluate_model", "mae", "mse", "predict", "r2_score", "FitConfig", "fit",
    "load_model", "save_model",
]

"""Robust regression networks trained with the penalised censored LTS criterion."""
from .bench import CellResult, ExperimentSpec, emit_csv, rmse, run_matrix
from .datagen import GeneratedData, SyntheticSpec, generate, load_csv, save_csv, target_function
from .errors import (
    ConfigurationError,
    ParseError,
    PCLTSError,
    PipelineError,
    StructuralError,
    TrainingError,
)
from .mlp import (
    Dataset,
    NetworkParams,
    NetworkShape,
    fit_ols,
    forward,
    init_params,
    ols_gradient,
    ols_loss,
    predict,
    residuals,
)
from .optimizer import ObjectiveHandle, OptimizerSpec, OptResult, differential_evolution, minimize, nelder_mead
from .robust_loss import (
    RobustLossConfig,
    ScaledResiduals,
    clean_mask,
    g_penalty,
    lts_objective,
    median_abs,
    pclts_objective,
)
from .trainer import TrainReport, TrainSpec, detect_outliers, train_baseline, train_robust

__version__ = "0.1.0"

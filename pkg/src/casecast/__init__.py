"""Case-count forecasting from daily statistics, search interest, and news.

A small numpy-only stack: explicit forward/backward passes for the
dense, attention, and GRU layers, a windowed data pipeline over
date-indexed CSV sources, Adam training with early stopping, and the
grid-search / ablation studies, all behind one command line tool.
"""

from .data import (
    GROUP_NAMES,
    TREND_KEYWORDS,
    FeatureGroupMap,
    FeatureTable,
    ImputationReport,
    SplitSpec,
    WindowedDataset,
    align_and_impute,
    leave_one_out,
    load_groups,
    load_table,
    make_windows,
)
from .errors import (
    CasecastError,
    ConfigError,
    InputError,
    NumericError,
    ShapeError,
)
from .model import (
    ForecastOutput,
    ModelConfig,
    build_params,
    forward,
    load_params,
    loss_and_grads,
    predict,
    save_params,
)
from .training import (
    AblationRow,
    AdamState,
    EvalReport,
    EpochStats,
    GridSpace,
    TrainSpec,
    TrialResult,
    ablate,
    adam_step,
    area_between,
    evaluate,
    grid_search,
    mae,
    rmse,
    train,
)

__all__ = [
    "AblationRow", "AdamState", "CasecastError", "ConfigError",
    "EpochStats", "EvalReport", "FeatureGroupMap", "FeatureTable",
    "ForecastOutput", "GridSpace", "GROUP_NAMES", "ImputationReport",
    "InputError", "ModelConfig", "NumericError", "ShapeError", "SplitSpec",
    "TrainSpec", "TrialResult", "TREND_KEYWORDS", "WindowedDataset",
    "ablate", "adam_step", "align_and_impute", "area_between",
    "build_params", "evaluate", "forward", "grid_search", "leave_one_out",
    "load_groups", "load_params", "load_table", "loss_and_grads", "mae",
    "make_windows", "predict", "rmse", "save_params", "train",
]

__version__ = "0.1.0"

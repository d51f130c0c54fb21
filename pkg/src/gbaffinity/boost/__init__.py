"""Histogram gradient-boosted regression trees."""

from .binning import BinMap, build_bins
from .config import CATBOOST_LIKE, LIGHTGBM_LIKE, PRESETS, TrainConfig
from .ensemble import (
    MODEL_VERSION,
    ColumnMismatchError,
    Ensemble,
    ModelFormatError,
    ModelVersionError,
    SquaredError,
    TrainResult,
    feature_importance,
    load_model,
    negative_gradient,
    predict,
    save_model,
    train,
)
from .tree import TooFewRowsWarning, Tree, fit_tree

__all__ = [
    "BinMap",
    "build_bins",
    "TrainConfig",
    "LIGHTGBM_LIKE",
    "CATBOOST_LIKE",
    "PRESETS",
    "MODEL_VERSION",
    "ColumnMismatchError",
    "Ensemble",
    "ModelFormatError",
    "ModelVersionError",
    "SquaredError",
    "TrainResult",
    "feature_importance",
    "load_model",
    "negative_gradient",
    "predict",
    "save_model",
    "train",
    "TooFewRowsWarning",
    "Tree",
    "fit_tree",
]

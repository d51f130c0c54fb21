"""Protein-ligand binding affinity regression with gradient-boosted trees.

Pipeline: :mod:`gbaffinity.molio` reads complexes, :mod:`gbaffinity.featurize`
turns them into contact-count and pooled atom-feature rows,
:mod:`gbaffinity.boost` trains the tree ensemble, and
:mod:`gbaffinity.evaluation` scores it.
"""

__version__ = "0.1.0"

from .baseline import LinearModel, ols_fit, ols_fit_1d
from .boost import Ensemble, TrainConfig, feature_importance, load_model, predict, save_model, train
from .evaluation import (
    MetricsReport,
    aggregate_runs,
    evaluate_predictions,
    importance_report,
    mae,
    pearson_r,
    rmse,
    sd_metric,
)
from .featurize import FeatureMatrix, InteractionConfig, featurize_dataset, interaction_features
from .molio import AtomRecord, ComplexRecord, DatasetSchema, gen_synthetic, parse_dataset, parse_pdb_lines

__all__ = [
    "LinearModel", "ols_fit", "ols_fit_1d",
    "Ensemble", "TrainConfig", "feature_importance", "load_model", "predict", "save_model", "train",
    "MetricsReport", "aggregate_runs", "evaluate_predictions", "importance_report", "mae", "pearson_r", "rmse", "sd_metric",
    "FeatureMatrix", "InteractionConfig", "featurize_dataset", "interaction_features",
    "AtomRecord", "ComplexRecord", "DatasetSchema", "gen_synthetic", "parse_dataset", "parse_pdb_lines",
]

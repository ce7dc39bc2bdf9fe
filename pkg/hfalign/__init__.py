"""
Hierarchical sales forecasting with loss-multiplier alignment.

Bottom-level boosted models are trained with an asymmetric squared loss whose
multiplier is chosen so their aggregate agrees with an independent top-level
network forecast.
"""
# re-export the public API from the top-level module path, for example
# 'from hfalign import tune_lambda'.

# local
from .gbm import (GBMConfig,
                  BoostedModel,
                  AsymmetricLoss,
                  train,
                  predict,
                  loss_value,
                  loss_hessian,
                  loss_gradient,
                  forecast_bottom,
                  train_per_store)
from .config import PipelineConfig, load_config, stage_seed
from .dataio import PanelDataset, load_m5, split_frames, generate_synthetic
from .metrics import (WeightTable,
                      mae,
                      rmse,
                      mase,
                      mape,
                      smape,
                      rmsse,
                      wrmsse,
                      mean_error,
                      dollar_weights,
                      report_metrics,
                      score_hierarchy)
from .basisnet import (BasisNet,
                       NetConfig,
                       TrainConfig,
                       EnsembleConfig,
                       forward,
                       train_top,
                       train_ensemble,
                       ensemble_forecast)
from .features import FeatureMatrix, build_features
from .pipeline import RunReport, cmd_run, cmd_sweep, cmd_report
from .lookahead import Lookahead
from .alignment import (AlignmentResult,
                        tune_lambda,
                        expost_sweep,
                        nearest_neighborhood,
                        alignment_objective,
                        neighborhood_ensemble)
from .hierarchy import (SeriesMatrix,
                        HierarchySpec,
                        aggregate,
                        build_hierarchy,
                        build_m5_hierarchy,
                        enumerate_all_series)
from .exceptions import (DataError,
                         ParseError,
                         StageError,
                         ConfigError,
                         SchemaError,
                         HfalignError,
                         TrainingError,
                         HierarchyError,
                         UndefinedScaleError)

# The __all__ attribute defines the items exported from statement,
# 'from hfalign import *', but also to say, "This is the public API".
__all__ = (
    'HierarchySpec', 'SeriesMatrix', 'build_hierarchy', 'build_m5_hierarchy', 'aggregate',
    'enumerate_all_series',
    'PanelDataset', 'load_m5', 'generate_synthetic', 'split_frames',
    'FeatureMatrix', 'build_features',
    'rmsse', 'wrmsse', 'mean_error', 'mae', 'rmse', 'smape', 'mape', 'mase', 'report_metrics',
    'WeightTable', 'dollar_weights', 'score_hierarchy',
    'loss_gradient', 'loss_hessian', 'loss_value', 'AsymmetricLoss', 'GBMConfig',
    'BoostedModel', 'train', 'predict', 'train_per_store', 'forecast_bottom',
    'BasisNet', 'NetConfig', 'TrainConfig', 'EnsembleConfig', 'Lookahead', 'forward',
    'train_top', 'train_ensemble', 'ensemble_forecast',
    'alignment_objective', 'tune_lambda', 'nearest_neighborhood', 'neighborhood_ensemble',
    'expost_sweep', 'AlignmentResult',
    'PipelineConfig', 'load_config', 'stage_seed', 'RunReport', 'cmd_run', 'cmd_sweep',
    'cmd_report',
    'HfalignError', 'ConfigError', 'DataError', 'SchemaError', 'ParseError', 'HierarchyError',
    'UndefinedScaleError', 'TrainingError', 'StageError',
)

# NOTE: manually manage __version__ here and in setup.py !
__version__ = '0.1.0'

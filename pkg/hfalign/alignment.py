"""
Loss-multiplier alignment of bottom-level forecasts with a top-level forecast.

For each multiplier on a grid, per-store boosted models are trained with the
asymmetric loss, their horizon forecasts are summed to the top level and
compared with an independent top-level forecast by RMSE.  The multiplier with
the smallest disagreement is selected, and the bottom forecasts of its nearest
grid neighbours are averaged.
"""
from __future__ import annotations

# std imports
import math
import logging
from typing import Sequence
from dataclasses import field, dataclass

# 3rd party
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

# local
from .gbm import GBMConfig, AsymmetricLoss, forecast_bottom, train_per_store
from .dataio import PanelDataset
from .metrics import DEFAULT_WEIGHT_WINDOW, dollar_weights, score_hierarchy
from .features import FeatureCache
from .hierarchy import SeriesMatrix, HierarchySpec, aggregate
from .exceptions import DataError, ConfigError, TrainingError

log = logging.getLogger(__name__)

NEIGHBORHOOD_SIZE = 5
GRID_UPPER = 2.0


def default_grid(step: float = 0.05, upper: float = GRID_UPPER) -> list[float]:
    """
    Multipliers ``step, 2 * step, ..., upper``.

    >>> len(default_grid()), default_grid()[:2], default_grid()[-1]
    (40, [0.05, 0.1], 2.0)
    """
    count = int(round(upper / step))
    return [round(step * k, 10) for k in range(1, count + 1)]


def refine_grid(center: float, step: float = 0.01, radius: float = 0.05) -> list[float]:
    """Multipliers within ``radius`` of ``center`` at ``step`` spacing, inside (0, 2]."""
    count = int(round(radius / step))
    values = (round(center + step * k, 10) for k in range(-count, count + 1))
    return [value for value in values if 0.0 < value <= GRID_UPPER]


def check_grid(grid: Sequence[float]) -> list[float]:
    grid = [float(lam) for lam in grid]
    if not grid:
        raise ConfigError('lambda grid is empty')
    bad = [lam for lam in grid if not 0.0 < lam <= GRID_UPPER]
    if bad:
        raise ConfigError(f'lambda grid values must be in (0, {GRID_UPPER}], got {bad}')
    return sorted(set(grid))


def alignment_objective(top_forecast, bottom_forecasts: SeriesMatrix, spec: HierarchySpec,
                        levels: Sequence[int] = (1,), how: str = 'sum') -> float:
    """
    RMSE between a top-level forecast and the aggregated bottom forecasts.

    :param top_forecast: level-1 forecast of length ``h``; or, for alignment
        over several levels, a :class:`SeriesMatrix` with ``levels`` holding
        a row for every node of ``levels``, whose per-node RMSE is averaged.
    :param str how: aggregation of bottom forecasts, ``'sum'`` or ``'mean'``.
    :raises DataError: horizons differ.

    >>> from hfalign.hierarchy import build_hierarchy
    >>> spec = build_hierarchy([{'item': 'a', 'store': 's'}], [('Total', ()),
    ...                         ('Item x Store', ('item', 'store'))])
    >>> round(alignment_objective([5, 5], SeriesMatrix([[4, 8]], [1, 2], ['a_s']), spec), 4)
    2.2361
    """
    if not isinstance(top_forecast, SeriesMatrix):
        top = np.asarray(top_forecast, dtype=np.float64).reshape(-1)
        if len(top) != bottom_forecasts.length:
            raise DataError(f'top forecast has {len(top)} steps, bottom forecasts '
                            f'{bottom_forecasts.length}')
        aggregated = aggregate(spec, bottom_forecasts, 1, how).values[0]
        return float(np.sqrt(np.mean((top - aggregated) ** 2)))

    if top_forecast.length != bottom_forecasts.length:
        raise DataError(f'top forecast has {top_forecast.length} steps, bottom forecasts '
                        f'{bottom_forecasts.length}')
    errors = []
    for level in levels:
        top_rows = top_forecast.at_levels([level])
        aggregated = aggregate(spec, bottom_forecasts, level, how)
        lookup = dict(zip(aggregated.series_ids, aggregated.values))
        missing = [sid for sid in top_rows.series_ids if sid not in lookup]
        if missing or top_rows.n_series != aggregated.n_series:
            raise DataError(f'top forecast does not cover level {level}: missing {missing}')
        for sid, row in zip(top_rows.series_ids, top_rows.values):
            errors.append(np.sqrt(np.mean((row - lookup[sid]) ** 2)))
    return float(np.mean(errors))


def select_lambda(grid: Sequence[float], objective: Sequence[float]) -> float:
    """
    Multiplier of the smallest finite objective; ties go to the value nearest 1.

    :raises TrainingError: every objective is NaN.
    """
    objective = np.asarray(objective, dtype=np.float64)
    finite = np.isfinite(objective)
    if not finite.any():
        raise TrainingError('every grid point failed to train')
    best = objective[finite].min()
    tied = [lam for lam, obj in zip(grid, objective) if obj == best]
    return min(tied, key=lambda lam: (abs(lam - 1.0), lam))


def nearest_neighborhood(grid: Sequence[float], center: float,
                         size: int = NEIGHBORHOOD_SIZE) -> tuple[float, ...]:
    """
    The ``size`` grid values nearest ``center``, itself included, ascending.

    >>> nearest_neighborhood([0.9, 0.93, 0.95, 0.97, 0.99, 1.2], 0.95)
    (0.9, 0.93, 0.95, 0.97, 0.99)
    """
    ranked = sorted(grid, key=lambda lam: (abs(lam - center), lam))
    return tuple(sorted(ranked[:size]))


@dataclass
class AlignmentResult:
    """
    Outcome of a multiplier search.

    :param tuple grid: evaluated multipliers, ascending.
    :param numpy.ndarray objective: alignment RMSE per multiplier, NaN if failed.
    :param float lambda_star: selected multiplier.
    :param tuple neighborhood: multipliers averaged by the ensemble.
    :param SeriesMatrix ensemble_forecast: mean bottom forecast over the neighborhood.
    :param dict forecasts: multiplier to its bottom forecast.
    :param dict failed: multiplier to the failure message.
    :param dict models: multiplier to its per-store models, neighborhood only.
    """
    grid: tuple
    objective: np.ndarray
    lambda_star: float
    neighborhood: tuple
    ensemble_forecast: SeriesMatrix | None = None
    forecasts: dict = field(default_factory=dict, repr=False)
    failed: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict, repr=False)

    def curve(self) -> pd.DataFrame:
        return pd.DataFrame({'lambda': list(self.grid), 'alignment_rmse': self.objective})


def _fit_lambda(lam, ds, cache, config):
    try:
        models = train_per_store(ds, AsymmetricLoss(lam), config, cache)
        return lam, forecast_bottom(models, ds, cache), models, None
    except (TrainingError, DataError, FloatingPointError, np.linalg.LinAlgError) as err:
        log.warning('training at lambda %.4f failed: %s', lam, err)
        return lam, None, None, str(err)


def fit_grid(ds: PanelDataset, grid: Sequence[float], gbm_config: GBMConfig,
             cache: FeatureCache | None = None, n_jobs: int = 1) -> tuple[dict, dict, dict]:
    """
    Train bottom models at each multiplier.

    :returns: ``({lam: bottom forecast}, {lam: failure message}, {lam: models})``.
    """
    cache = cache or FeatureCache(ds)
    cache.warm()
    fitted = Parallel(n_jobs=n_jobs)(
        delayed(_fit_lambda)(lam, ds, cache, gbm_config) for lam in grid)
    forecasts = {lam: forecast for lam, forecast, _, _ in fitted if forecast is not None}
    failed = {lam: error for lam, _, _, error in fitted if error is not None}
    models = {lam: fitted_models for lam, _, fitted_models, _ in fitted if fitted_models}
    return forecasts, failed, models


def tune_lambda(ds: PanelDataset, top_forecast, grid: Sequence[float], gbm_config: GBMConfig,
                cache: FeatureCache | None = None, refine: bool = False,
                levels: Sequence[int] = (1,), n_jobs: int = 1,
                neighborhood_size: int = NEIGHBORHOOD_SIZE, how: str = 'sum') -> AlignmentResult:
    """
    Select the multiplier whose aggregated bottom forecast best matches the top.

    :param PanelDataset ds: training dataset, forecasts cover the next ``h`` days.
    :param top_forecast: level-1 forecast, or a multi-level :class:`SeriesMatrix`.
    :param grid: multipliers in ``(0, 2]``.
    :param bool refine: evaluate a 0.01-step grid around the coarse optimum too.
    :param levels: levels aligned on; anything but ``(1,)`` is experimental.
    :param str how: aggregation of bottom forecasts, ``sum`` or ``mean``.
    :raises ConfigError: a multiplier outside ``(0, 2]``.
    :raises TrainingError: every multiplier failed.
    :rtype: AlignmentResult
    """
    grid = check_grid(grid)
    if tuple(levels) != (1,):
        log.info('aligning on levels %s (experimental)', list(levels))
    cache = cache or FeatureCache(ds)
    forecasts, failed, models = fit_grid(ds, grid, gbm_config, cache, n_jobs)

    def _objectives(values):
        return np.array([alignment_objective(top_forecast, forecasts[lam], ds.hierarchy,
                                             levels, how)
                         if lam in forecasts else math.nan for lam in values])

    objective = _objectives(grid)
    lambda_star = select_lambda(grid, objective)
    if refine:
        extra = [lam for lam in refine_grid(lambda_star) if lam not in grid]
        more_forecasts, more_failed, more_models = fit_grid(ds, extra, gbm_config, cache, n_jobs)
        forecasts.update(more_forecasts)
        failed.update(more_failed)
        models.update(more_models)
        grid = sorted(grid + extra)
        objective = _objectives(grid)
        lambda_star = select_lambda(grid, objective)
    usable = [lam for lam in grid if lam in forecasts]
    result = AlignmentResult(grid=tuple(grid), objective=objective, lambda_star=lambda_star,
                             neighborhood=nearest_neighborhood(usable, lambda_star,
                                                               neighborhood_size),
                             forecasts=forecasts, failed=failed)
    result.models = {lam: models[lam] for lam in result.neighborhood if lam in models}
    result.ensemble_forecast = neighborhood_ensemble(result, ds, gbm_config, cache)
    log.info('lambda* = %s, neighborhood %s', lambda_star, list(result.neighborhood))
    return result


def neighborhood_ensemble(result: AlignmentResult, ds: PanelDataset | None = None,
                          gbm_config: GBMConfig | None = None,
                          cache: FeatureCache | None = None) -> SeriesMatrix:
    """
    Elementwise mean of the neighborhood's bottom forecasts.

    Forecasts stored in ``result`` are reused; missing ones are trained, which
    requires ``ds`` and ``gbm_config``.
    """
    if not result.neighborhood:
        raise TrainingError('empty multiplier neighborhood')
    missing = [lam for lam in result.neighborhood if lam not in result.forecasts]
    if missing:
        if ds is None or gbm_config is None:
            raise TrainingError(f'no stored forecasts for multipliers {missing}')
        more, failed, more_models = fit_grid(ds, missing, gbm_config, cache)
        if failed:
            raise TrainingError(f'neighborhood multipliers failed to train: {sorted(failed)}')
        result.forecasts.update(more)
        result.models.update(more_models)
    members = [result.forecasts[lam] for lam in result.neighborhood]
    values = np.mean(np.stack([member.values for member in members]), axis=0)
    return SeriesMatrix(values, members[0].time_index, members[0].series_ids, members[0].levels)


def _bottom_rows(spec: HierarchySpec, actuals: SeriesMatrix) -> SeriesMatrix:
    if actuals.n_series == spec.n_bottom:
        return actuals
    if actuals.levels is not None:
        return actuals.at_levels([spec.bottom_level])
    raise DataError(f'actuals have {actuals.n_series} rows, neither {spec.n_bottom} bottom '
                    f'series nor level-tagged')


def expost_sweep(ds: PanelDataset, spec: HierarchySpec, actuals: SeriesMatrix,
                 grid: Sequence[float], gbm_config: GBMConfig, top_forecast=None,
                 cache: FeatureCache | None = None, n_jobs: int = 1,
                 weight_window: int = DEFAULT_WEIGHT_WINDOW) -> list[dict]:
    """
    WRMSSE of every multiplier on held-out actuals.

    :param actuals: bottom-level or all-level actuals of the horizon.
    :param top_forecast: when given, each row also carries its alignment RMSE.
    :returns: one row per multiplier: ``lambda``, ``alignment_rmse``,
        ``wrmsse_total`` and ``wrmsse_level_<k>``; failed multipliers hold NaN.
    """
    grid = check_grid(grid)
    bottom_actuals = _bottom_rows(spec, actuals)
    weights = dollar_weights(ds, spec, weight_window)
    forecasts, _, _ = fit_grid(ds, grid, gbm_config, cache, n_jobs)
    rows = []
    for lam in grid:
        row = {'lambda': lam, 'alignment_rmse': math.nan, 'wrmsse_total': math.nan}
        row.update({f'wrmsse_level_{level.id}': math.nan for level in spec.levels})
        if lam in forecasts:
            scores = score_hierarchy(spec, ds.sales, bottom_actuals, forecasts[lam], weights)
            row['wrmsse_total'] = scores.wrmsse_total
            for level_id, value in scores.wrmsse_per_level.items():
                row[f'wrmsse_level_{level_id}'] = value
            if top_forecast is not None:
                row['alignment_rmse'] = alignment_objective(top_forecast, forecasts[lam], spec)
        rows.append(row)
    return rows


def write_sweep_csv(rows: Sequence[dict], path) -> None:
    """Wide sweep table, one row per multiplier."""
    pd.DataFrame(list(rows)).to_csv(path, index=False)


def write_sweep_long_csv(rows: Sequence[dict], path) -> None:
    """Long ``lambda, metric, value`` table for plotting curves."""
    frame = pd.DataFrame(list(rows)).melt(id_vars='lambda', var_name='metric', value_name='value')
    frame.to_csv(path, index=False)

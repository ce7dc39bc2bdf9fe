"""
Scaled forecast errors and dollar-sales weights.

RMSSE divides horizon MSE by the in-sample MSE of the one-step naive forecast;
WRMSSE sums RMSSE over every series of every level, weighted by dollar sales
with all levels weighing equally.  Errors follow the over-forecast-positive
sign convention: ``mean_error = mean(forecast - actual)``.
"""
from __future__ import annotations

# std imports
import os
import json
import math
import logging
from typing import Mapping, Sequence
from dataclasses import dataclass, asdict

# 3rd party
import numpy as np
import pandas as pd

# local
from .dataio import PanelDataset
from .hierarchy import SeriesMatrix, HierarchySpec, enumerate_all_series
from .exceptions import DataError, UndefinedScaleError

log = logging.getLogger(__name__)

#: Trailing training days whose dollar sales weight the series.
DEFAULT_WEIGHT_WINDOW = 28

SCORE_COLUMNS = ('series_id', 'level', 'rmsse', 'mean_error', 'mae', 'rmse', 'weight')


def _check_lengths(actual, forecast):
    actual = np.asarray(actual, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    if actual.shape != forecast.shape:
        raise DataError(f'actual of shape {actual.shape} and forecast of shape '
                        f'{forecast.shape} differ')
    return actual, forecast


def scale_rows(train: np.ndarray, first_nonzero: bool = True) -> np.ndarray:
    """
    In-sample one-step naive MSE of each row of ``train``.

    With ``first_nonzero``, days before a row's first non-zero observation are
    left out.  Rows with fewer than two usable days get NaN.
    """
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    n_days = train.shape[1]
    if n_days < 2:
        return np.full(train.shape[0], np.nan)
    if first_nonzero:
        nonzero = train != 0
        first = np.where(nonzero.any(axis=1), nonzero.argmax(axis=1), 0)
    else:
        first = np.zeros(train.shape[0], dtype=np.int64)
    valid = np.arange(n_days - 1)[None, :] >= first[:, None]
    squares = np.where(valid, np.diff(train, axis=1) ** 2, 0.0)
    counts = n_days - first - 1
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(counts > 0, squares.sum(axis=1) / np.maximum(counts, 1), np.nan)


def rmsse_rows(train, actual, forecast, first_nonzero: bool = True) -> np.ndarray:
    """Row-wise RMSSE, NaN where the scale is zero or undefined."""
    actual, forecast = _check_lengths(np.atleast_2d(actual), np.atleast_2d(forecast))
    scale = scale_rows(train, first_nonzero)
    mse = np.mean((actual - forecast) ** 2, axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(scale > 0, np.sqrt(mse / np.where(scale > 0, scale, 1.0)), np.nan)


def rmsse(train, actual, forecast, first_nonzero: bool = True) -> float:
    """
    Root mean squared scaled error of one series.

    :param train: in-sample history, length ``n >= 2``.
    :param actual: horizon actuals, length ``h``.
    :param forecast: horizon forecast, length ``h``.
    :param bool first_nonzero: scale only from the first non-zero sale onward.
    :raises UndefinedScaleError: the naive-forecast scale is zero.
    :raises DataError: lengths differ or ``n < 2``.

    >>> round(rmsse([0, 2, 0, 2, 0, 2], [2, 0], [0, 0]), 5)
    0.70711
    """
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 1 or len(train) < 2:
        raise DataError(f'rmsse needs at least 2 training values, got {train.shape}')
    value = rmsse_rows(train[None, :], np.asarray(actual)[None, :],
                       np.asarray(forecast)[None, :], first_nonzero)[0]
    if math.isnan(value):
        raise UndefinedScaleError('training series has zero naive-forecast scale')
    return float(value)


def mean_error(actual, forecast) -> float:
    actual, forecast = _check_lengths(actual, forecast)
    return float(np.mean(forecast - actual))


def mae(actual, forecast) -> float:
    actual, forecast = _check_lengths(actual, forecast)
    return float(np.mean(np.abs(forecast - actual)))


def rmse(actual, forecast) -> float:
    actual, forecast = _check_lengths(actual, forecast)
    return float(np.sqrt(np.mean((forecast - actual) ** 2)))


def smape(actual, forecast) -> float:
    """Symmetric MAPE in percent, terms with ``actual == forecast == 0`` count 0."""
    actual, forecast = _check_lengths(actual, forecast)
    denom = np.abs(actual) + np.abs(forecast)
    terms = np.divide(200.0 * np.abs(forecast - actual), denom,
                      out=np.zeros_like(denom), where=denom > 0)
    return float(np.mean(terms))


def mape(actual, forecast) -> float:
    """MAPE in percent over days with non-zero actuals, NaN when there are none."""
    actual, forecast = _check_lengths(actual, forecast)
    nonzero = actual != 0
    if not nonzero.any():
        return math.nan
    return float(100.0 * np.mean(np.abs(forecast[nonzero] - actual[nonzero])
                                 / np.abs(actual[nonzero])))


def mase(train, actual, forecast, m: int = 1) -> float:
    """
    Mean absolute scaled error against the in-sample seasonal naive forecast.

    :raises UndefinedScaleError: the in-sample scale is zero.
    """
    actual, forecast = _check_lengths(actual, forecast)
    train = np.asarray(train, dtype=np.float64)
    if len(train) <= m:
        raise DataError(f'mase needs more than m={m} training values')
    scale = np.mean(np.abs(train[m:] - train[:-m]))
    if scale == 0:
        raise UndefinedScaleError('training series has zero seasonal naive scale')
    return float(np.mean(np.abs(forecast - actual)) / scale)


def report_metrics(actual, forecast, train=None) -> dict[str, float]:
    """
    Auxiliary accuracy metrics of one forecast.

    ``mase`` is included when ``train`` is given, NaN if its scale is zero.

    >>> report_metrics([1, 3], [2, 2])['mae']
    1.0
    """
    result = {
        'mean_error': mean_error(actual, forecast),
        'mae': mae(actual, forecast),
        'rmse': rmse(actual, forecast),
        'smape': smape(actual, forecast),
        'mape': mape(actual, forecast),
    }
    if train is not None:
        try:
            result['mase'] = mase(train, actual, forecast)
        except UndefinedScaleError:
            result['mase'] = math.nan
    return result


@dataclass(frozen=True)
class WeightTable:
    """Weight of every series of every level, rows ordered level 1..L."""
    series_ids: tuple[str, ...]
    levels: tuple[int, ...]
    weights: np.ndarray

    @property
    def keys(self) -> tuple[tuple[int, str], ...]:
        return tuple(zip(self.levels, self.series_ids))

    def level_sums(self) -> dict[int, float]:
        levels = np.asarray(self.levels)
        return {int(lvl): float(self.weights[levels == lvl].sum()) for lvl in np.unique(levels)}

    def as_dict(self) -> dict[tuple[int, str], float]:
        return dict(zip(self.keys, (float(w) for w in self.weights)))


def weights_from_dollar_sales(spec: HierarchySpec, dollar: Sequence[float]) -> WeightTable:
    """
    Normalize bottom dollar sales into a coherent weight table.

    Dollar sales are summed to every level, then scaled within each level to
    total ``1/L``.  A level with zero dollar sales gets uniform weights.

    >>> from hfalign.hierarchy import build_hierarchy
    >>> spec = build_hierarchy([{'item': 'a', 'store': 's'}, {'item': 'b', 'store': 's'}],
    ...                        [('Total', ()), ('Item x Store', ('item', 'store'))])
    >>> weights_from_dollar_sales(spec, [300, 100]).weights.tolist()
    [0.5, 0.375, 0.125]
    """
    dollar = np.asarray(dollar, dtype=np.float64).reshape(-1, 1)
    if dollar.shape[0] != spec.n_bottom:
        raise DataError(f'{dollar.shape[0]} dollar values for {spec.n_bottom} bottom series')
    stacked = enumerate_all_series(spec, SeriesMatrix(dollar, [0], spec.series_ids(spec.bottom_level)))
    values = stacked.values[:, 0]
    levels = np.asarray(stacked.levels)
    weights = np.empty_like(values)
    share = 1.0 / spec.n_levels
    for level in spec.levels:
        rows = levels == level.id
        total = values[rows].sum()
        if total > 0:
            weights[rows] = share * values[rows] / total
        else:
            log.warning('level %d (%s) has zero dollar sales, using uniform weights',
                        level.id, level.label)
            weights[rows] = share / rows.sum()
    return WeightTable(stacked.series_ids, stacked.levels, weights)


def dollar_weights(ds: PanelDataset, spec: HierarchySpec | None = None,
                   window_days: int = DEFAULT_WEIGHT_WINDOW) -> WeightTable:
    """
    Weight table from dollar sales of the last ``window_days`` training days.

    :raises DataError: window longer than the training data, or units sold on
        a day without a price record.
    :rtype: WeightTable
    """
    spec = spec or ds.hierarchy
    if not 1 <= window_days <= ds.train_end:
        raise DataError(f'weight window of {window_days} days, training has {ds.train_end}')
    first = ds.train_end - window_days + 1
    units = ds.sales.window(first, ds.train_end).values
    prices = ds.daily_prices(first, ds.train_end)
    unpriced = (units > 0) & np.isnan(prices)
    if unpriced.any():
        row = int(np.argwhere(unpriced)[0][0])
        raise DataError(f'series {ds.sales.series_ids[row]} has sales without a price record '
                        f'in days {first}..{ds.train_end}')
    dollar = np.where(units > 0, units * np.nan_to_num(prices), 0.0).sum(axis=1)
    return weights_from_dollar_sales(spec, dollar)


def wrmsse(scores: Mapping[tuple[int, str], float], weights: WeightTable) -> float:
    """
    Weighted sum of RMSSE values.

    :param scores: ``(level, series_id)`` to RMSSE; NaN entries contribute 0.
    :param WeightTable weights: weights of the same series set.
    :raises DataError: the series sets differ, the message lists the difference.

    >>> table = WeightTable(('a', 'b', 'c'), (1, 1, 1), np.array([0.5, 0.25, 0.25]))
    >>> round(wrmsse({(1, 'a'): 0.4, (1, 'b'): 0.8, (1, 'c'): 1.2}, table), 10)
    0.7
    """
    keys = weights.keys
    difference = set(scores).symmetric_difference(keys)
    if difference:
        raise DataError(f'scores and weights cover different series: {sorted(difference)}')
    values = np.array([scores[key] for key in keys], dtype=np.float64)
    return float(np.sum(np.where(np.isnan(values), 0.0, values * weights.weights)))


@dataclass(frozen=True)
class SeriesScore:
    series_id: str
    level: int
    rmsse: float
    mean_error: float
    mae: float
    rmse: float
    weight: float


@dataclass(frozen=True)
class HierarchyScores:
    """
    Per-series scores and per-level summaries of one forecast.

    :param list scores: one :class:`SeriesScore` per series, level 1 first.
    :param dict wrmsse_per_level: level id to its weighted RMSSE sum.
    :param float wrmsse_total: sum over levels.
    :param dict level_summary: level id to the mean of each metric over its nodes.
    """
    scores: tuple[SeriesScore, ...]
    wrmsse_per_level: dict[int, float]
    wrmsse_total: float
    level_summary: dict[int, dict[str, float]]


def score_hierarchy(spec: HierarchySpec, history: SeriesMatrix, actuals: SeriesMatrix,
                    forecasts: SeriesMatrix, weights: WeightTable,
                    first_nonzero: bool = True) -> HierarchyScores:
    """
    Score a bottom-level forecast at every level of the hierarchy.

    History, actuals and forecasts are bottom-level and aggregated here.
    Series with an undefined scale get RMSSE NaN, and are left out of the
    weighted sums without renormalizing the remaining weights.
    """
    if actuals.length != forecasts.length:
        raise DataError(f'actuals cover {actuals.length} days, forecasts {forecasts.length}')
    train_all = enumerate_all_series(spec, history)
    actual_all = enumerate_all_series(spec, actuals)
    forecast_all = enumerate_all_series(spec, forecasts)
    if train_all.series_ids != weights.series_ids:
        raise DataError('weight table rows do not match the hierarchy series')

    rmsse_values = rmsse_rows(train_all.values, actual_all.values, forecast_all.values,
                              first_nonzero)
    errors = forecast_all.values - actual_all.values
    mean_errors = errors.mean(axis=1)
    maes = np.abs(errors).mean(axis=1)
    rmses = np.sqrt((errors ** 2).mean(axis=1))
    undefined = np.flatnonzero(np.isnan(rmsse_values))
    if len(undefined):
        log.warning('%d series have an undefined RMSSE scale and are excluded, first: %s',
                    len(undefined), train_all.series_ids[undefined[0]])

    levels = np.asarray(train_all.levels)
    contribution = np.where(np.isnan(rmsse_values), 0.0, rmsse_values * weights.weights)
    per_level = {}
    summary = {}
    for level in spec.levels:
        rows = levels == level.id
        per_level[level.id] = float(contribution[rows].sum())
        summary[level.id] = {
            'n_series': int(rows.sum()),
            'mean_error': float(mean_errors[rows].mean()),
            'mae': float(maes[rows].mean()),
            'rmse': float(rmses[rows].mean()),
            'rmsse': float(np.nanmean(rmsse_values[rows])) if np.isfinite(
                rmsse_values[rows]).any() else math.nan,
            'wrmsse': per_level[level.id],
        }
    scores = tuple(
        SeriesScore(sid, int(lvl), float(r), float(me), float(a), float(s), float(w))
        for sid, lvl, r, me, a, s, w in zip(train_all.series_ids, train_all.levels,
                                             rmsse_values, mean_errors, maes, rmses,
                                             weights.weights))
    return HierarchyScores(scores, per_level, float(sum(per_level.values())), summary)


def _json_number(value):
    return None if isinstance(value, float) and not math.isfinite(value) else value


def write_scores(result: HierarchyScores, spec: HierarchySpec, directory,
                 node_levels: Sequence[int] = (1, 2, 3)) -> dict[str, str]:
    """
    Write ``scores.csv`` and ``summary.json`` into ``directory``.

    The summary holds one block per level, with one row per node for the
    levels in ``node_levels``.
    """
    os.makedirs(directory, exist_ok=True)
    paths = {'scores': os.path.join(directory, 'scores.csv'),
             'summary': os.path.join(directory, 'summary.json')}
    frame = pd.DataFrame([asdict(score) for score in result.scores], columns=list(SCORE_COLUMNS))
    frame.to_csv(paths['scores'], index=False)

    blocks = []
    for level in spec.levels:
        block = {'level': level.id, 'label': level.label,
                 **{key: _json_number(val) for key, val in result.level_summary[level.id].items()}}
        if level.id in node_levels:
            block['nodes'] = [{key: _json_number(val) for key, val in asdict(score).items()}
                              for score in result.scores if score.level == level.id]
        blocks.append(block)
    with open(paths['summary'], 'w', encoding='utf8') as fout:
        json.dump({'schema_version': 1, 'wrmsse_total': result.wrmsse_total,
                   'levels': blocks}, fout, indent=1)
    return paths

"""Tests for the multiplier search and the neighborhood ensemble."""
# std imports
import os
import math

# 3rd party
import numpy as np
import pandas as pd
import pytest

# local
from hfalign import alignment
from hfalign.gbm import GBMConfig
from hfalign.features import FeatureCache
from hfalign.alignment import (AlignmentResult,
                               fit_grid,
                               check_grid,
                               refine_grid,
                               tune_lambda,
                               default_grid,
                               expost_sweep,
                               select_lambda,
                               write_sweep_csv,
                               alignment_objective,
                               nearest_neighborhood,
                               neighborhood_ensemble,
                               write_sweep_long_csv)
from hfalign.hierarchy import SeriesMatrix, aggregate, build_hierarchy, enumerate_all_series
from hfalign.exceptions import DataError, ConfigError, TrainingError

QUICK = GBMConfig(num_rounds=5)


def test_default_grid():
    """Forty multipliers from 0.05 to 2 in steps of 0.05."""
    # exercise,
    grid = default_grid()

    # verify.
    assert len(grid) == 40
    assert grid[0] == 0.05
    assert grid[19] == 1.0
    assert grid[-1] == 2.0


def test_refine_grid():
    """Eleven points around the center, clipped to the valid range."""
    # exercise, verify.
    assert refine_grid(0.95) == [0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0]
    assert refine_grid(0.02) == [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07]
    assert refine_grid(2.0)[-1] == 2.0


@pytest.mark.parametrize('grid', [[], [0.0, 1.0], [1.0, 2.5], [-0.1]])
def test_check_grid_rejects(grid):
    """Empty grids and values outside (0, 2] are configuration errors."""
    # exercise, verify.
    with pytest.raises(ConfigError):
        check_grid(grid)


def test_check_grid_sorts_and_dedupes():
    """Grids are returned ascending without duplicates."""
    # exercise, verify.
    assert check_grid([1.1, 0.9, 1.1, 2]) == [0.9, 1.1, 2.0]


def _tiny_spec():
    return build_hierarchy([{'item': 'a', 'store': 's'}, {'item': 'b', 'store': 's'}],
                           [('Total', ()), ('Item x Store', ('item', 'store'))])


def test_objective_by_hand():
    """RMSE between the top forecast and the summed bottom forecasts."""
    # given,
    bottom = SeriesMatrix([[1.0, 2.0, 3.0], [1.0, 1.0, 1.0]], [1, 2, 3], ['a_s', 'b_s'])

    # exercise,
    result = alignment_objective([2.0, 3.0, 7.0], bottom, _tiny_spec())

    # verify.
    assert result == pytest.approx(math.sqrt(9 / 3))
    assert alignment_objective([2.0, 3.0, 4.0], bottom, _tiny_spec()) == 0.0


def test_objective_mean_aggregation():
    """With mean aggregation the bottom rows are averaged."""
    # given,
    bottom = SeriesMatrix([[2.0, 4.0], [0.0, 0.0]], [1, 2], ['a_s', 'b_s'])

    # exercise, verify.
    assert alignment_objective([1.0, 2.0], bottom, _tiny_spec(), how='mean') == 0.0


def test_objective_horizon_mismatch():
    """Top and bottom forecasts must cover the same days."""
    # given,
    bottom = SeriesMatrix([[1.0, 2.0], [1.0, 1.0]], [1, 2], ['a_s', 'b_s'])

    # exercise, verify.
    with pytest.raises(DataError):
        alignment_objective([1.0, 2.0, 3.0], bottom, _tiny_spec())


def test_objective_several_levels(small_train):
    """Multi-level alignment of a coherent top forecast is zero."""
    # given,
    train, actuals = small_train
    spec = train.hierarchy
    top = enumerate_all_series(spec, actuals).at_levels([1, 3])

    # exercise,
    result = alignment_objective(top, actuals, spec, levels=(1, 3))

    # verify.
    assert result == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DataError, match='level 2'):
        alignment_objective(top, actuals, spec, levels=(1, 2))


def test_select_lambda_minimum():
    """The smallest finite objective wins; NaN entries are ignored."""
    # exercise, verify.
    assert select_lambda([0.5, 1.0, 1.5], [3.0, math.nan, 2.0]) == 1.5


def test_select_lambda_tie_nearest_one():
    """Equal objectives resolve to the multiplier nearest one."""
    # exercise, verify.
    assert select_lambda([0.5, 0.9, 1.2, 1.5], [1.0, 1.0, 1.0, 2.0]) == 0.9
    assert select_lambda([0.9, 1.1], [1.0, 1.0]) == 0.9


def test_select_lambda_all_failed():
    """Without any finite objective nothing can be selected."""
    # exercise, verify.
    with pytest.raises(TrainingError):
        select_lambda([0.5, 1.0], [math.nan, math.nan])


def test_neighborhood():
    """The five nearest grid values, fewer if the grid is small."""
    # given,
    grid = default_grid()

    # exercise, verify.
    assert nearest_neighborhood(grid, 1.0) == (0.9, 0.95, 1.0, 1.05, 1.1)
    assert nearest_neighborhood(grid, 0.05) == (0.05, 0.1, 0.15, 0.2, 0.25)
    assert nearest_neighborhood([0.9, 1.0], 1.0) == (0.9, 1.0)


def test_neighborhood_ensemble_is_mean():
    """The ensemble forecast is the elementwise mean of stored forecasts."""
    # given,
    first = SeriesMatrix([[1.0, 2.0]], [5, 6], ['x'])
    second = SeriesMatrix([[3.0, 6.0]], [5, 6], ['x'])
    result = AlignmentResult(grid=(0.9, 1.0), objective=np.array([1.0, 2.0]), lambda_star=0.9,
                             neighborhood=(0.9, 1.0), forecasts={0.9: first, 1.0: second})

    # exercise,
    ensemble = neighborhood_ensemble(result)

    # verify.
    np.testing.assert_array_equal(ensemble.values, [[2.0, 4.0]])
    np.testing.assert_array_equal(ensemble.time_index, [5, 6])


def test_neighborhood_ensemble_missing_forecast():
    """Missing forecasts cannot be trained without data."""
    # given,
    result = AlignmentResult(grid=(1.0,), objective=np.array([1.0]), lambda_star=1.0,
                             neighborhood=(1.0,))

    # exercise, verify.
    with pytest.raises(TrainingError):
        neighborhood_ensemble(result)


def test_recovers_exact_multiplier(small_train):
    """A top forecast equal to one multiplier's aggregate selects that multiplier."""
    # given,
    train, _ = small_train
    cache = FeatureCache(train)
    grid = [0.8, 1.0, 1.2, 1.4]
    forecasts, _, _ = fit_grid(train, [1.2], QUICK, cache)
    top = aggregate(train.hierarchy, forecasts[1.2], 1).values[0]

    # exercise,
    result = tune_lambda(train, top, grid, QUICK, cache=cache)

    # verify.
    assert result.lambda_star == 1.2
    assert result.objective[2] == pytest.approx(0.0, abs=1e-9)
    assert result.lambda_star == result.grid[int(np.nanargmin(result.objective))]
    assert result.neighborhood == tuple(grid)
    assert sorted(result.models) == grid
    assert result.ensemble_forecast.values.shape == forecasts[1.2].values.shape


def test_scaled_top_prefers_larger_multiplier(small_train):
    """A top forecast above the symmetric aggregate rules out the small multiplier."""
    # given,
    train, _ = small_train
    cache = FeatureCache(train)
    forecasts, _, _ = fit_grid(train, [1.0], QUICK, cache)
    top = 1.1 * aggregate(train.hierarchy, forecasts[1.0], 1).values[0]

    # exercise,
    result = tune_lambda(train, top, [0.5, 1.0, 1.5], QUICK, cache=cache)

    # verify.
    assert result.lambda_star >= 1.0
    assert result.objective[0] > result.objective[1]


def test_refinement_adds_fine_grid(small_train):
    """Refinement evaluates the 0.01-step grid around the coarse optimum."""
    # given,
    train, _ = small_train
    cache = FeatureCache(train)
    forecasts, _, _ = fit_grid(train, [1.0], QUICK, cache)
    top = aggregate(train.hierarchy, forecasts[1.0], 1).values[0]

    # exercise,
    result = tune_lambda(train, top, [0.5, 1.0, 1.5], QUICK, cache=cache, refine=True)

    # verify.
    assert set(refine_grid(1.0)) <= set(result.grid)
    assert len(result.grid) == 13
    assert result.lambda_star == result.grid[int(np.nanargmin(result.objective))]


def test_failed_multiplier_is_nan(small_train, monkeypatch):
    """A multiplier that fails to train scores NaN and is never selected."""
    # given,
    train, _ = small_train
    real = alignment.train_per_store

    def flaky(ds, loss, config, cache=None, n_jobs=1):
        if loss.lam == 1.0:
            raise TrainingError('diverged')
        return real(ds, loss, config, cache, n_jobs)

    monkeypatch.setattr(alignment, 'train_per_store', flaky)
    top = np.zeros(train.horizon)

    # exercise,
    result = tune_lambda(train, top, [0.5, 1.0, 1.5], QUICK)

    # verify.
    assert math.isnan(result.objective[1])
    assert result.failed == {1.0: 'diverged'}
    assert result.lambda_star != 1.0
    assert 1.0 not in result.neighborhood


def test_all_multipliers_fail(small_train, monkeypatch):
    """When nothing trains the search fails."""
    # given,
    train, _ = small_train

    def broken(*args, **kwargs):
        raise TrainingError('diverged')

    monkeypatch.setattr(alignment, 'train_per_store', broken)

    # exercise, verify.
    with pytest.raises(TrainingError):
        tune_lambda(train, np.zeros(train.horizon), [0.5, 1.0], QUICK)


def test_expost_sweep(small_train, tmp_path):
    """One row per multiplier with total and per-level WRMSSE."""
    # given,
    train, actuals = small_train
    top = np.zeros(train.horizon)

    # exercise,
    rows = expost_sweep(train, train.hierarchy, actuals, [0.9, 1.1], QUICK, top_forecast=top)
    write_sweep_csv(rows, str(tmp_path / 'sweep.csv'))
    write_sweep_long_csv(rows, str(tmp_path / 'sweep_long.csv'))

    # verify.
    assert [row['lambda'] for row in rows] == [0.9, 1.1]
    assert all(row['wrmsse_total'] > 0 for row in rows)
    assert all(row['alignment_rmse'] >= 0 for row in rows)
    assert 'wrmsse_level_12' in rows[0]
    wide = pd.read_csv(tmp_path / 'sweep.csv')
    long = pd.read_csv(tmp_path / 'sweep_long.csv')
    assert len(wide) == 2
    assert list(long.columns) == ['lambda', 'metric', 'value']
    assert len(long) == 2 * (len(wide.columns) - 1)


@pytest.mark.skipif(bool(os.environ.get('TEST_QUICK')), reason='long-running property check')
def test_recovers_upward_bias_on_default_grid(small_train):
    """A top forecast 10% over the symmetric aggregate selects a multiplier above one."""
    # given,
    train, _ = small_train
    config = GBMConfig(num_rounds=20, bagging_fraction=1.0, colsample_bytree=1.0,
                       colsample_bynode=1.0)
    cache = FeatureCache(train)
    forecasts, _, _ = fit_grid(train, [1.0], config, cache)
    top = 1.1 * aggregate(train.hierarchy, forecasts[1.0], 1).values[0]

    # exercise,
    result = tune_lambda(train, top, default_grid(), config, cache=cache)

    # verify.
    assert result.lambda_star > 1.0
    best = int(np.nanargmin(result.objective))
    assert result.lambda_star == result.grid[best]
    assert len(result.neighborhood) == 5
    # away from one grid step around the optimum the curve falls, then rises
    curve = result.objective
    slack = 0.05 * (np.nanmax(curve) - np.nanmin(curve))
    falling = np.diff(curve[:max(best - 1, 0)])
    rising = np.diff(curve[best + 2:])
    assert (falling <= slack).all()
    assert (rising >= -slack).all()

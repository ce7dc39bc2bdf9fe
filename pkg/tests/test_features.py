"""Tests for the feature builder."""
# std imports
import json
import dataclasses

# 3rd party
import numpy as np
import pandas as pd
import pytest

# local
from hfalign import features
from hfalign.features import (NO_EVENT,
                              UNKNOWN_CODE,
                              FEATURE_COLUMNS,
                              FeatureCache,
                              FeatureMatrix,
                              target_of,
                              build_features,
                              encode_categoricals)
from hfalign.exceptions import DataError, SchemaError


def test_columns_and_rows(small_train):
    """One row per priced (series, day), with every feature column."""
    # given,
    train, _ = small_train

    # exercise,
    fm = build_features(train, (1, train.train_end))

    # verify.
    assert fm.columns == FEATURE_COLUMNS
    prices = train.daily_prices(1, train.train_end)
    assert fm.n_rows == int(np.isfinite(prices).sum())
    assert fm.frame[list(FEATURE_COLUMNS)].notna().all().all()


def test_independent_of_sales(small_train):
    """Features do not change when the sales are scrambled."""
    # given,
    train, _ = small_train
    rng = np.random.default_rng(0)
    shuffled = dataclasses.replace(train, sales=dataclasses.replace(
        train.sales, values=rng.permutation(train.sales.values, axis=1)))

    # exercise,
    first = build_features(train, (1, train.train_end))
    second = build_features(shuffled, (1, train.train_end))

    # verify.
    pd.testing.assert_frame_equal(first.frame, second.frame)


def test_price_norm_bounded(small_train):
    """The price relative to its maximum is at most one."""
    # given,
    train, _ = small_train

    # exercise,
    fm = build_features(train, (1, train.train_end + train.horizon))

    # verify.
    assert (fm.frame['price_norm'] <= 1.0).all()
    assert (fm.frame['price_norm'] > 0.0).all()


def test_calendar_fields(small_train):
    """Calendar-derived fields of the first day, 2011-01-29, a Saturday."""
    # given,
    train, _ = small_train

    # exercise,
    row = build_features(train, (1, 1)).frame.iloc[0]

    # verify.
    assert row['tm_d'] == 29
    assert row['tm_m'] == 1
    assert row['tm_y'] == 0
    assert row['tm_dw'] == 5
    assert row['tm_w_end'] == 1
    assert row['tm_wm'] == 5


def test_missing_events_filled(small_train):
    """Days without an event hold the no-event label."""
    # given,
    train, _ = small_train

    # exercise,
    fm = build_features(train, (1, train.train_end))

    # verify.
    assert (fm.frame['event_name_2'] == NO_EVENT).all()


def test_store_subset(small_train):
    """Restricting to a store keeps only its series."""
    # given,
    train, _ = small_train

    # exercise,
    fm = build_features(train, (1, 7), ['TX_1'])

    # verify.
    assert set(fm.series) <= set(train.store_rows('TX_1'))


def test_window_outside_calendar(small_train):
    """A window past the calendar is rejected."""
    # given,
    train, _ = small_train

    # exercise, verify.
    with pytest.raises(DataError, match='feature window'):
        build_features(train, (1, len(train.calendar) + 1))


def test_encoding_unknown_label(small_train):
    """Labels absent from the training code book encode as unknown."""
    # given,
    train, _ = small_train
    fm = build_features(train, (1, 14))
    codebooks = {col: ['zzz'] for col in fm.columns if fm.kinds[col] == 'categorical'}

    # exercise,
    encoded = encode_categoricals(fm, codebooks)

    # verify.
    assert (encoded.frame['item_id'] == UNKNOWN_CODE).all()
    assert encoded.to_array().dtype == np.float64


def test_unencoded_array(small_train):
    """Labels cannot be used as numbers."""
    # given,
    train, _ = small_train

    # exercise, verify.
    with pytest.raises(SchemaError):
        build_features(train, (1, 7)).to_array()


def test_codebook_hash_stable(small_train):
    """The code book hash depends only on the code books."""
    # given,
    train, _ = small_train
    first = encode_categoricals(build_features(train, (1, 28)))
    second = encode_categoricals(build_features(train, (1, 28)))

    # verify.
    assert first.codebook_hash() == second.codebook_hash()
    assert len(first.codebook_hash()) == 64


def test_target_alignment(small_train):
    """Targets are the sales of each row's series and day."""
    # given,
    train, _ = small_train
    fm = build_features(train, (1, train.train_end))

    # exercise,
    target = target_of(train, fm)

    # verify.
    row = fm.n_rows // 2
    assert target[row] == train.sales.values[fm.series[row], fm.days[row] - 1]


def test_cache_reuses_matrices(small_train):
    """The cache returns the same objects; the horizon uses training code books."""
    # given,
    train, _ = small_train
    cache = FeatureCache(train).warm()

    # exercise,
    fm, _ = cache.train('CA_1')
    horizon = cache.horizon('CA_1')

    # verify.
    assert cache.train('CA_1')[0] is fm
    assert horizon.codebooks == fm.codebooks
    assert horizon.days.min() == train.train_end + 1
    assert horizon.days.max() == train.train_end + train.horizon


def test_csv_sidecar(small_train, tmp_path):
    """The schema sidecar lists the columns and kinds."""
    # given,
    train, _ = small_train
    path = str(tmp_path / 'features.csv')

    # exercise,
    encode_categoricals(build_features(train, (1, 7))).to_csv(path)

    # verify.
    with open(f'{path}.schema.json', encoding='utf8') as fin:
        schema = json.load(fin)
    assert schema['columns'] == list(FEATURE_COLUMNS)
    assert schema['kinds']['item_id'] == 'categorical'
    assert isinstance(FeatureMatrix(pd.read_csv(path)).n_rows, int)


def _with_price_paths(ds, paths):
    """Replace the price records of catalog rows by weekly price lists from the first week."""
    weeks = np.sort(ds.calendar['wm_yr_wk'].unique())
    prices = ds.prices
    for row, path in paths.items():
        store, item = ds.catalog['store_id'].iloc[row], ds.catalog['item_id'].iloc[row]
        keep = ~((prices['store_id'] == store) & (prices['item_id'] == item))
        fixture = pd.DataFrame({'store_id': store, 'item_id': item,
                                'wm_yr_wk': weeks[:len(path)], 'sell_price': path})
        prices = pd.concat([prices[keep], fixture], ignore_index=True)
    return dataclasses.replace(ds, prices=prices)


@pytest.fixture(scope='module')
def priced(small_train):
    """Training data whose first three series carry hand-written price paths."""
    train, _ = small_train
    ds = _with_price_paths(train, {0: [3.0] * 10 + [3.5] * 10,
                                   1: [5.0] * 5 + [4.0] * 15,
                                   2: [2.0]})
    return ds, build_features(ds, (1, ds.train_end))


def _rows(fm, series):
    return fm.frame[fm.frame['series'] == series]


def _week_of(ds, days):
    return ds.calendar['wm_yr_wk'].to_numpy()[np.asarray(days) - 1]


def test_price_norm_of_fixture(priced):
    """A price of 4 against a maximum of 5 is normalized to 0.8."""
    # given,
    _, fm = priced

    # exercise,
    rows = _rows(fm, 1)

    # verify.
    assert (rows['price_max'] == 5.0).all()
    np.testing.assert_allclose(rows.loc[rows['sell_price'] == 4.0, 'price_norm'], 0.8)
    assert (rows.loc[rows['sell_price'] == 5.0, 'price_norm'] == 1.0).all()


def test_price_change_fixture(priced):
    """Two distinct prices; the weekly change is 0.5 at the step and 0 elsewhere."""
    # given,
    ds, fm = priced
    weeks = np.sort(ds.calendar['wm_yr_wk'].unique())

    # exercise,
    rows = _rows(fm, 0)
    row_weeks = _week_of(ds, rows['d'])

    # verify.
    assert (rows['price_nunique'] == 2).all()
    np.testing.assert_allclose(rows.loc[row_weeks == weeks[10], 'price_diff_w'], 0.5)
    assert (rows.loc[row_weeks != weeks[10], 'price_diff_w'] == 0.0).all()


def test_price_std_over_training_weeks(priced):
    """The price spread uses the sample deviation of training-week records."""
    # given,
    ds, fm = priced
    train_weeks = len(np.unique(_week_of(ds, np.arange(1, ds.train_end + 1))))
    path = np.array([3.0] * 10 + [3.5] * 10)[:train_weeks]

    # exercise,
    rows = _rows(fm, 0)

    # verify.
    np.testing.assert_allclose(rows['price_std'], np.std(path, ddof=1))
    np.testing.assert_allclose(rows['price_mean'], path.mean())


def test_single_price_has_zero_spread(priced):
    """A series with one price record has no spread and one distinct price."""
    # given,
    _, fm = priced

    # exercise,
    rows = _rows(fm, 2)

    # verify.
    assert len(rows) == 7
    assert (rows['price_std'] == 0.0).all()
    assert (rows['price_nunique'] == 1).all()


def test_monthly_and_yearly_price_differences(priced):
    """Price minus the series' monthly and yearly mean of weekly records."""
    # given,
    ds, fm = priced
    weeks = np.sort(ds.calendar['wm_yr_wk'].unique())[:20]
    path = pd.Series([3.0] * 10 + [3.5] * 10, index=weeks)
    first_days = ds.calendar.drop_duplicates('wm_yr_wk').set_index('wm_yr_wk')
    month_mean = path.groupby(first_days.loc[weeks, 'month'].to_numpy()).mean()

    # exercise,
    rows = _rows(fm, 0)
    row_weeks = _week_of(ds, rows['d'])

    # verify.
    expected_m = path.loc[row_weeks].to_numpy() - month_mean.loc[
        first_days.loc[row_weeks, 'month'].to_numpy()].to_numpy()
    np.testing.assert_allclose(rows['price_diff_m'], expected_m, rtol=0, atol=1e-9)
    np.testing.assert_allclose(rows['price_diff_y'], rows['sell_price'] - 3.25,
                               rtol=0, atol=1e-9)


def test_category_codes_are_lexicographic(small_train):
    """Categories encode as their position in sorted order."""
    # given,
    train, _ = small_train
    fm = build_features(train, (1, 14))

    # exercise,
    encoded = encode_categoricals(fm)

    # verify.
    assert encoded.codebooks['cat_id'] == ['FOODS', 'HOBBIES', 'HOUSEHOLD']
    expected = fm.frame['cat_id'].map({'FOODS': 0, 'HOBBIES': 1, 'HOUSEHOLD': 2})
    np.testing.assert_array_equal(encoded.frame['cat_id'], expected)


def test_cache_builds_price_tables_once(small_train, monkeypatch):
    """Every store's matrices share one computation of the price tables."""
    # given,
    train, _ = small_train
    calls = []
    real = features._price_tables

    def counting(ds):
        calls.append(ds)
        return real(ds)

    monkeypatch.setattr(features, '_price_tables', counting)

    # exercise,
    cache = FeatureCache(train).warm()

    # verify.
    assert len(calls) == 1
    pd.testing.assert_frame_equal(cache.train('TX_1')[0].frame, encode_categoricals(
        build_features(train, (1, train.train_end), ['TX_1'])).frame)

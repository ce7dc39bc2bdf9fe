"""
Bottom-level feature matrix.

Features are categorical identifiers, price derivatives, event and SNAP flags,
and calendar fields.  Nothing is derived from past sales: the builder never
reads ``PanelDataset.sales``.
"""
from __future__ import annotations

# std imports
import json
import hashlib
import logging
from typing import Iterable, Sequence
from dataclasses import field, dataclass

# 3rd party
import numpy as np
import pandas as pd

# local
from .dataio import PanelDataset
from .exceptions import DataError, SchemaError

log = logging.getLogger(__name__)

CATEGORICAL = 'categorical'
NUMERIC = 'numeric'

FEATURE_KINDS = {
    'item_id': CATEGORICAL,
    'dept_id': CATEGORICAL,
    'cat_id': CATEGORICAL,
    'sell_price': NUMERIC,
    'event_name_1': CATEGORICAL,
    'event_type_1': CATEGORICAL,
    'event_name_2': CATEGORICAL,
    'event_type_2': CATEGORICAL,
    'snap_CA': NUMERIC,
    'snap_TX': NUMERIC,
    'snap_WI': NUMERIC,
    'release': NUMERIC,
    'price_max': NUMERIC,
    'price_min': NUMERIC,
    'price_std': NUMERIC,
    'price_mean': NUMERIC,
    'price_norm': NUMERIC,
    'price_nunique': NUMERIC,
    'item_nunique': NUMERIC,
    'price_diff_w': NUMERIC,
    'price_diff_m': NUMERIC,
    'price_diff_y': NUMERIC,
    'tm_d': NUMERIC,
    'tm_w': NUMERIC,
    'tm_m': NUMERIC,
    'tm_y': NUMERIC,
    'tm_wm': NUMERIC,
    'tm_dw': NUMERIC,
    'tm_w_end': NUMERIC,
}
FEATURE_COLUMNS = tuple(FEATURE_KINDS)
INDEX_COLUMNS = ('series', 'd')

#: Label standing in for "no event" in event columns.
NO_EVENT = 'NONE'
#: Code of a category absent from the code book.
UNKNOWN_CODE = -1

_EVENT_COLUMNS = ('event_name_1', 'event_type_1', 'event_name_2', 'event_type_2')


@dataclass
class FeatureMatrix:
    """
    One row per ``(series, day)`` pair.

    :param pandas.DataFrame frame: ``series`` (bottom row index) and ``d`` (day
        number) followed by :data:`FEATURE_COLUMNS`.
    :param dict kinds: column name to ``'categorical'`` or ``'numeric'``.
    :param dict codebooks: column name to ordered labels once encoded, else None.
    """
    frame: pd.DataFrame
    kinds: dict = field(default_factory=lambda: dict(FEATURE_KINDS))
    codebooks: dict | None = None

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(col for col in self.frame.columns if col not in INDEX_COLUMNS)

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    @property
    def encoded(self) -> bool:
        return self.codebooks is not None

    @property
    def series(self) -> np.ndarray:
        return self.frame['series'].to_numpy()

    @property
    def days(self) -> np.ndarray:
        return self.frame['d'].to_numpy()

    def categorical_mask(self) -> np.ndarray:
        return np.array([self.kinds[col] == CATEGORICAL for col in self.columns])

    def codebook_hash(self) -> str:
        """sha256 of the code books, stored with models to match encodings."""
        payload = json.dumps(self.codebooks or {}, sort_keys=True)
        return hashlib.sha256(payload.encode('utf8')).hexdigest()

    def to_array(self) -> np.ndarray:
        """Feature values as a float64 ``[rows x columns]`` array."""
        if not self.encoded:
            raise SchemaError('categorical columns must be encoded before use as numbers')
        return self.frame[list(self.columns)].to_numpy(dtype=np.float64)

    def subset(self, mask) -> FeatureMatrix:
        return FeatureMatrix(self.frame.loc[mask].reset_index(drop=True), dict(self.kinds),
                             self.codebooks)

    def schema(self) -> dict:
        return {'columns': list(self.columns),
                'kinds': {col: self.kinds[col] for col in self.columns},
                'codebooks': self.codebooks}

    def to_csv(self, path) -> None:
        """Write the matrix and a ``<path>.schema.json`` sidecar."""
        self.frame.to_csv(path, index=False)
        with open(f'{path}.schema.json', 'w', encoding='utf8') as fout:
            json.dump(self.schema(), fout, indent=1, sort_keys=True)


def _price_tables(ds: PanelDataset) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-record price features and per-series train-portion aggregates."""
    prices = ds.prices.copy()
    first_days = ds.calendar.drop_duplicates('wm_yr_wk')[['wm_yr_wk', 'month', 'year']]
    prices = prices.merge(first_days, on='wm_yr_wk', how='left')
    prices = prices.sort_values(['store_id', 'item_id', 'wm_yr_wk'], kind='stable')

    by_series = prices.groupby(['store_id', 'item_id'], sort=False)['sell_price']
    prices['price_diff_w'] = by_series.diff().fillna(0.0)
    prices['price_diff_m'] = prices['sell_price'] - prices.groupby(
        ['store_id', 'item_id', 'month'])['sell_price'].transform('mean')
    prices['price_diff_y'] = prices['sell_price'] - prices.groupby(
        ['store_id', 'item_id', 'year'])['sell_price'].transform('mean')
    prices['item_nunique'] = prices.groupby(
        ['store_id', 'sell_price'])['item_id'].transform('nunique')

    weeks = np.sort(ds.calendar['wm_yr_wk'].unique())
    release = prices.groupby(['store_id', 'item_id'])['wm_yr_wk'].min()
    release = pd.Series(np.searchsorted(weeks, release.to_numpy()), index=release.index,
                        name='release')

    def _aggregate(records):
        grouped = records.groupby(['store_id', 'item_id'])['sell_price']
        aggs = grouped.agg(price_max='max', price_min='min', price_std='std',
                           price_mean='mean', price_nunique='nunique')
        aggs['price_std'] = aggs['price_std'].fillna(0.0)
        return aggs

    train_last_week = ds.calendar['wm_yr_wk'].iloc[ds.train_end - 1]
    aggs = _aggregate(prices[prices['wm_yr_wk'] <= train_last_week])
    fallback = _aggregate(prices)
    missing = fallback.index.difference(aggs.index)
    if len(missing):
        log.debug('%d series without train-portion prices use all price records', len(missing))
        aggs = pd.concat([aggs, fallback.loc[missing]])
    series_table = aggs.join(release).reset_index()
    record_table = prices[['store_id', 'item_id', 'wm_yr_wk', 'sell_price', 'item_nunique',
                           'price_diff_w', 'price_diff_m', 'price_diff_y']]
    return record_table, series_table


def _calendar_table(ds: PanelDataset, first_day: int, last_day: int) -> pd.DataFrame:
    calendar = ds.calendar.iloc[first_day - 1:last_day]
    dates = pd.to_datetime(calendar['date'])
    train_years = pd.to_datetime(ds.calendar['date'].iloc[:max(ds.train_end, 1)]).dt.year
    dow = dates.dt.dayofweek.to_numpy().astype(np.int64)
    table = pd.DataFrame({
        'd': np.arange(first_day, last_day + 1),
        'wm_yr_wk': calendar['wm_yr_wk'].to_numpy(),
        'tm_d': dates.dt.day.to_numpy().astype(np.int64),
        'tm_w': dates.dt.isocalendar().week.astype(np.int64).to_numpy(),
        'tm_m': dates.dt.month.to_numpy().astype(np.int64),
        'tm_y': dates.dt.year.to_numpy().astype(np.int64) - int(train_years.min()),
        'tm_dw': dow,
    })
    table['tm_wm'] = np.ceil(table['tm_d'] / 7).astype(np.int64)
    table['tm_w_end'] = (dow >= 5).astype(np.int64)
    for column in _EVENT_COLUMNS:
        table[column] = calendar[column].fillna(NO_EVENT).astype(str).to_numpy()
    for column in ('snap_CA', 'snap_TX', 'snap_WI'):
        table[column] = calendar[column].to_numpy().astype(np.int64)
    return table


def build_features(ds: PanelDataset, window: tuple[int, int],
                   stores: Iterable[str] | None = None,
                   price_tables: tuple | None = None) -> FeatureMatrix:
    """
    Build the feature matrix of the days in ``window``.

    :param PanelDataset ds: dataset; only calendar, prices and catalog are read.
    :param tuple window: first and last day number, inclusive.
    :param stores: restrict to series of these stores.
    :param price_tables: price tables of ``ds`` to reuse, as kept by
        :meth:`FeatureCache.price_tables`.
    :raises DataError: window outside the calendar.
    :rtype: FeatureMatrix

    Rows before a series' release week are not emitted.  Series without any
    price record are dropped with a warning.
    """
    first_day, last_day = window
    if first_day < 1 or last_day > len(ds.calendar) or first_day > last_day:
        raise DataError(f'feature window {first_day}..{last_day} outside calendar of '
                        f'{len(ds.calendar)} days')
    rows = np.arange(len(ds.catalog))
    if stores is not None:
        rows = np.flatnonzero(ds.catalog['store_id'].isin(list(stores)).to_numpy())

    records, series_table = price_tables if price_tables is not None else _price_tables(ds)
    catalog = ds.catalog.iloc[rows]
    priced = pd.MultiIndex.from_frame(series_table[['store_id', 'item_id']])
    has_price = pd.MultiIndex.from_arrays(
        [catalog['store_id'], catalog['item_id']]).isin(priced)
    for series_id in catalog['id'].to_numpy()[~has_price]:
        log.warning('series %s has no price records and is excluded', series_id)
    rows = rows[has_price]

    days = np.arange(first_day, last_day + 1)
    grid = pd.DataFrame({'series': np.repeat(rows, len(days)),
                         'd': np.tile(days, len(rows))})
    for column in ('item_id', 'dept_id', 'cat_id', 'store_id'):
        grid[column] = ds.catalog[column].to_numpy()[grid['series'].to_numpy()]
    grid = grid.merge(_calendar_table(ds, first_day, last_day), on='d', how='left')
    grid = grid.merge(records, on=['store_id', 'item_id', 'wm_yr_wk'], how='left')
    grid = grid.merge(series_table, on=['store_id', 'item_id'], how='left')
    grid = grid[grid['sell_price'].notna()]
    grid['price_norm'] = np.minimum(grid['sell_price'] / grid['price_max'], 1.0)

    frame = grid[list(INDEX_COLUMNS + FEATURE_COLUMNS)].reset_index(drop=True)
    for column, kind in FEATURE_KINDS.items():
        if kind == CATEGORICAL:
            frame[column] = frame[column].astype(str)
    log.debug('built %d feature rows for %d series, days %d..%d',
              len(frame), len(rows), first_day, last_day)
    return FeatureMatrix(frame)


def encode_categoricals(fm: FeatureMatrix, codebooks: dict | None = None) -> FeatureMatrix:
    """
    Replace categorical labels by integer codes.

    Codes are positions in the lexicographically sorted label list of each
    column.  Given ``codebooks`` (from a training matrix), labels missing from
    them receive :data:`UNKNOWN_CODE`.

    :rtype: FeatureMatrix
    """
    if fm.encoded:
        raise SchemaError('feature matrix is already encoded')
    categorical = [col for col in fm.columns if fm.kinds[col] == CATEGORICAL]
    if codebooks is None:
        codebooks = {col: sorted(set(fm.frame[col].astype(str))) for col in categorical}
    missing = [col for col in categorical if col not in codebooks]
    if missing:
        raise SchemaError(f'no code book for columns {missing}')
    frame = fm.frame.copy()
    for column in categorical:
        codes = pd.Categorical(frame[column].astype(str), categories=codebooks[column]).codes
        frame[column] = codes.astype(np.int64)
    return FeatureMatrix(frame, dict(fm.kinds),
                         {col: list(codebooks[col]) for col in categorical})


def target_of(ds: PanelDataset, fm: FeatureMatrix) -> np.ndarray:
    """Unit sales at each feature row, from ``ds.sales``."""
    offset = int(ds.sales.time_index[0])
    return ds.sales.values[fm.series, fm.days - offset].astype(np.float64)


class FeatureCache:
    """
    Memoized encoded feature matrices per store.

    The training matrix covers days ``1..train_end``, the horizon matrix the
    following ``horizon`` days, encoded with the training code books.  With
    ``enabled=False`` every call rebuilds.
    """

    def __init__(self, ds: PanelDataset, enabled: bool = True):
        self.ds = ds
        self.enabled = enabled
        self._train: dict[str, tuple[FeatureMatrix, np.ndarray]] = {}
        self._horizon: dict[str, FeatureMatrix] = {}
        self._prices: tuple[pd.DataFrame, pd.DataFrame] | None = None

    def price_tables(self) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Per-record and per-series price features, computed once per dataset."""
        if self._prices is not None:
            return self._prices
        tables = _price_tables(self.ds)
        if self.enabled:
            self._prices = tables
        return tables

    def train(self, store: str) -> tuple[FeatureMatrix, np.ndarray]:
        """Encoded training features and target of one store."""
        if store in self._train:
            return self._train[store]
        fm = encode_categoricals(build_features(self.ds, (1, self.ds.train_end), [store],
                                                self.price_tables()))
        result = (fm, target_of(self.ds, fm))
        if self.enabled:
            self._train[store] = result
        return result

    def horizon(self, store: str) -> FeatureMatrix:
        if store in self._horizon:
            return self._horizon[store]
        train_fm, _ = self.train(store)
        window = (self.ds.train_end + 1, self.ds.train_end + self.ds.horizon)
        fm = encode_categoricals(build_features(self.ds, window, [store], self.price_tables()),
                                 train_fm.codebooks)
        if self.enabled:
            self._horizon[store] = fm
        return fm

    def warm(self, stores: Sequence[str] | None = None) -> FeatureCache:
        """Build every store's matrices up front."""
        for store in stores if stores is not None else self.ds.stores:
            self.horizon(store)
        return self

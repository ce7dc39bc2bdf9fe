"""
Ingest and synthesize M5-format panel data.

The M5 distribution is three CSV files: wide-format unit sales, one row per
bottom series; a calendar with events and SNAP flags, one row per day; and
weekly sell prices per store and item.  :func:`load_m5` and :func:`write_m5`
read and write that layout, :func:`generate_synthetic` produces a desk-scale
stand-in with the same schema.
"""
from __future__ import annotations

# std imports
import os
import logging
import dataclasses
from typing import Sequence
from dataclasses import dataclass

# 3rd party
import numpy as np
import pandas as pd

# local
from .hierarchy import SeriesMatrix, HierarchySpec, build_m5_hierarchy
from .exceptions import DataError, ParseError, SchemaError

log = logging.getLogger(__name__)

SALES_ID_COLUMNS = ('id', 'item_id', 'dept_id', 'cat_id', 'store_id', 'state_id')
CALENDAR_COLUMNS = ('date', 'wm_yr_wk', 'weekday', 'wday', 'month', 'year', 'd',
                    'event_name_1', 'event_type_1', 'event_name_2', 'event_type_2',
                    'snap_CA', 'snap_TX', 'snap_WI')
PRICE_COLUMNS = ('store_id', 'item_id', 'wm_yr_wk', 'sell_price')

SALES_FILE = 'sales_train_evaluation.csv'
CALENDAR_FILE = 'calendar.csv'
PRICES_FILE = 'sell_prices.csv'

#: Length of the M5 forecast horizon, in days.
M5_HORIZON = 28

FRAMES = ('validation', 'evaluation')

# synthetic calendar
_START_DATE = '2011-01-29'
_FIRST_WEEK = 11101
_STATES = ('CA', 'TX', 'WI')
_CATEGORIES = ('FOODS', 'HOBBIES', 'HOUSEHOLD')
_EVENTS = {
    (1, 1): ('NewYear', 'National'),
    (2, 14): ('ValentinesDay', 'Cultural'),
    (7, 4): ('IndependenceDay', 'National'),
    (10, 31): ('Halloween', 'Cultural'),
}
_SNAP_DAYS = {
    'CA': frozenset(range(1, 11)),
    'TX': frozenset((1, 3, 5, 6, 7, 9, 11, 12, 13, 15)),
    'WI': frozenset((2, 3, 5, 6, 8, 9, 11, 12, 14, 15)),
}


@dataclass(frozen=True)
class PanelDataset:
    """
    Aligned daily observations of every bottom series with side data.

    :param SeriesMatrix sales: bottom-level unit sales, days ``1..train_end``
        at least.
    :param pandas.DataFrame calendar: one row per day in M5 calendar layout.
    :param pandas.DataFrame prices: ``store_id, item_id, wm_yr_wk, sell_price``,
        no rows before an item's release week.
    :param HierarchySpec hierarchy: aggregation structure of ``sales`` rows.
    :param pandas.DataFrame catalog: the six sales id columns, one row per series.
    :param int train_end: last observed training day ``n``.
    :param int horizon: forecast horizon ``h``.
    """
    sales: SeriesMatrix
    calendar: pd.DataFrame
    prices: pd.DataFrame
    hierarchy: HierarchySpec
    catalog: pd.DataFrame
    train_end: int
    horizon: int = M5_HORIZON

    def __post_init__(self):
        if self.horizon < 1:
            raise DataError(f'horizon must be positive, got {self.horizon}')
        if len(self.calendar) < self.train_end + self.horizon:
            raise DataError(f'calendar covers {len(self.calendar)} days, fewer than '
                            f'train_end + horizon = {self.train_end + self.horizon}')
        if self.sales.length and int(self.sales.time_index[-1]) < self.train_end:
            raise DataError(f'sales end at day {int(self.sales.time_index[-1])}, '
                            f'before train_end {self.train_end}')

    @property
    def stores(self) -> list[str]:
        """Store ids in order of first appearance."""
        return list(pd.unique(self.catalog['store_id']))

    def store_rows(self, store: str) -> np.ndarray:
        return np.flatnonzero(self.catalog['store_id'].to_numpy() == store)

    def day_weeks(self, first_day: int, last_day: int) -> np.ndarray:
        """``wm_yr_wk`` of days ``first_day..last_day`` inclusive."""
        if first_day < 1 or last_day > len(self.calendar):
            raise DataError(f'days {first_day}..{last_day} beyond calendar of '
                            f'{len(self.calendar)} days')
        return self.calendar['wm_yr_wk'].to_numpy()[first_day - 1:last_day]

    def daily_prices(self, first_day: int, last_day: int) -> np.ndarray:
        """
        Sell price of every bottom series on every day of a window.

        :returns: ``[series x days]`` array, NaN where no price record exists.
        """
        weeks = self.day_weeks(first_day, last_day)
        table = (self.prices.set_index(['store_id', 'item_id', 'wm_yr_wk'])['sell_price']
                 .unstack('wm_yr_wk'))
        rows = pd.MultiIndex.from_arrays([self.catalog['store_id'], self.catalog['item_id']])
        table = table.reindex(index=rows, columns=np.unique(weeks))
        positions = np.searchsorted(table.columns.to_numpy(), weeks)
        return table.to_numpy(dtype=np.float64)[:, positions]


def _check_columns(frame: pd.DataFrame, expected: Sequence[str], what: str) -> None:
    for column in expected:
        if column not in frame.columns:
            raise SchemaError(f'{what}: missing column {column!r}')


def _parse_sales(frame: pd.DataFrame, day_columns: list[str]) -> np.ndarray:
    raw = frame[day_columns]
    numeric = raw.apply(pd.to_numeric, errors='coerce')
    values = numeric.to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values) | (values != np.round(values)) | (values < 0)
    if bad.any():
        row, col = (int(idx) for idx in np.argwhere(bad)[0])
        raise ParseError(f'sales: row {row + 1} column {day_columns[col]!r}: '
                         f'{raw.iat[row, col]!r} is not a non-negative integer',
                         row=row + 1, column=day_columns[col])
    return values


def load_m5(sales_csv, calendar_csv, prices_csv, horizon: int = M5_HORIZON) -> PanelDataset:
    """
    Load the three M5 CSV files.

    Every sales column is observed, ``train_end`` is the number of day columns.

    :raises SchemaError: a required column is missing, or day columns are not
        ``d_1..d_T`` in order.
    :raises ParseError: a sales cell is not a non-negative integer.
    :raises DataError: the calendar is shorter than ``T + horizon`` days.
    :rtype: PanelDataset
    """
    sales = pd.read_csv(sales_csv, dtype=str, keep_default_na=False)
    _check_columns(sales, SALES_ID_COLUMNS, 'sales')
    day_columns = [col for col in sales.columns if col not in SALES_ID_COLUMNS]
    for pos, column in enumerate(day_columns, start=1):
        if column != f'd_{pos}':
            raise SchemaError(f'sales: expected column d_{pos}, found {column!r}')
    values = _parse_sales(sales, day_columns)

    calendar = pd.read_csv(calendar_csv)
    _check_columns(calendar, CALENDAR_COLUMNS, 'calendar')
    calendar = calendar[list(CALENDAR_COLUMNS)]
    n_days = len(day_columns)
    if len(calendar) < n_days + horizon:
        raise DataError(f'calendar has {len(calendar)} days, sales need '
                        f'{n_days} + horizon {horizon} = {n_days + horizon}')

    prices = pd.read_csv(prices_csv, dtype={'store_id': str, 'item_id': str})
    _check_columns(prices, PRICE_COLUMNS, 'prices')
    prices = prices[list(PRICE_COLUMNS)]
    if not np.issubdtype(prices['sell_price'].dtype, np.number):
        raise ParseError('prices: column sell_price is not numeric', column='sell_price')

    catalog = sales[list(SALES_ID_COLUMNS)].reset_index(drop=True)
    hierarchy = build_m5_hierarchy(
        list(zip(catalog['item_id'], catalog['dept_id'], catalog['cat_id'],
                 catalog['store_id'], catalog['state_id'])))
    matrix = SeriesMatrix(values, np.arange(1, n_days + 1), tuple(catalog['id']))
    log.info('loaded %d series over %d days from %s', len(catalog), n_days, sales_csv)
    return PanelDataset(sales=matrix, calendar=calendar, prices=prices, hierarchy=hierarchy,
                        catalog=catalog, train_end=n_days, horizon=horizon)


def write_m5(ds: PanelDataset, directory) -> dict[str, str]:
    """
    Write a dataset as the three M5 CSV files into ``directory``.

    :returns: mapping of ``sales``, ``calendar``, ``prices`` to written paths.
    """
    os.makedirs(directory, exist_ok=True)
    paths = {'sales': os.path.join(directory, SALES_FILE),
             'calendar': os.path.join(directory, CALENDAR_FILE),
             'prices': os.path.join(directory, PRICES_FILE)}
    days = pd.DataFrame(ds.sales.values.astype(np.int64),
                        columns=[f'd_{d}' for d in ds.sales.time_index])
    pd.concat([ds.catalog.reset_index(drop=True), days], axis=1).to_csv(paths['sales'], index=False)
    ds.calendar.to_csv(paths['calendar'], index=False)
    ds.prices.to_csv(paths['prices'], index=False)
    return paths


def _synthetic_calendar(n_days: int) -> pd.DataFrame:
    dates = pd.date_range(_START_DATE, periods=n_days, freq='D')
    day = np.arange(1, n_days + 1)
    events = [_EVENTS.get((date.month, date.day), (np.nan, np.nan)) for date in dates]
    calendar = pd.DataFrame({
        'date': dates.strftime('%Y-%m-%d'),
        'wm_yr_wk': _FIRST_WEEK + (day - 1) // 7,
        'weekday': dates.day_name(),
        # M5 numbering: Saturday is 1
        'wday': ((dates.dayofweek.to_numpy() - 5) % 7 + 1).astype(np.int64),
        'month': dates.month.to_numpy().astype(np.int64),
        'year': dates.year.to_numpy().astype(np.int64),
        'd': [f'd_{d}' for d in day],
        'event_name_1': [name for name, _ in events],
        'event_type_1': [kind for _, kind in events],
        'event_name_2': np.nan,
        'event_type_2': np.nan,
    })
    for state, snap_days in _SNAP_DAYS.items():
        calendar[f'snap_{state}'] = np.isin(dates.day, sorted(snap_days)).astype(np.int64)
    return calendar


def generate_synthetic(seed: int, n_items: int, n_stores: int, T: int,
                       intermittency: float, horizon: int = M5_HORIZON) -> PanelDataset:
    """
    Generate a desk-scale dataset in the M5 schema.

    A sales cell is zero with probability ``intermittency``, otherwise ``1`` plus
    a Poisson draw whose rate combines a per-item level, weekday seasonality,
    price elasticity, and SNAP and event uplifts.  Roughly one series in five is
    released up to four weeks late, with zero sales and no prices before then.

    :param int seed: generator seed, the dataset is a pure function of arguments.
    :param int T: observed days, must exceed ``2 * horizon``.
    :param float intermittency: zero probability in ``[0, 1]``.
    :rtype: PanelDataset
    """
    if T <= 2 * horizon:
        raise DataError(f'T must exceed {2 * horizon}, got {T}')
    if not 0.0 <= intermittency <= 1.0:
        raise DataError(f'intermittency must be in [0, 1], got {intermittency}')
    if n_items < 1 or n_stores < 1:
        raise DataError(f'need at least one item and one store, got {n_items}, {n_stores}')
    rng = np.random.default_rng(seed)
    calendar = _synthetic_calendar(T + horizon)

    items = []
    for idx in range(n_items):
        category = _CATEGORIES[idx % len(_CATEGORIES)]
        dept = f'{category}_{1 + (idx // len(_CATEGORIES)) % 2}'
        items.append((f'{dept}_{idx + 1:03d}', dept, category))
    stores = [(f'{_STATES[j % 3]}_{j // 3 + 1}', _STATES[j % 3]) for j in range(n_stores)]
    catalog = pd.DataFrame(
        [(f'{item}_{store}_evaluation', item, dept, cat, store, state)
         for store, state in stores for item, dept, cat in items],
        columns=list(SALES_ID_COLUMNS))

    n_series = len(catalog)
    n_weeks = int(calendar['wm_yr_wk'].iloc[-1] - _FIRST_WEEK + 1)
    base_price = np.round(rng.uniform(1.0, 10.0, size=n_items), 2)
    level = rng.gamma(2.0, 1.0, size=n_series)
    season = 1.0 + 0.3 * rng.standard_normal(7).clip(-2, 2) / 2
    late = rng.random(n_series) < 0.2
    release_week = np.where(late, rng.integers(1, 5, size=n_series), 0)

    # weekly price paths, one per series
    steps = rng.random((n_series, n_weeks))
    moves = np.where(rng.random((n_series, n_weeks)) < 0.5, 0.9, 1.1)
    factor = np.cumprod(np.where(steps < 0.05, moves, 1.0), axis=1)
    item_pos = np.tile(np.arange(n_items), n_stores)
    weekly_price = np.round(base_price[item_pos, None] * factor, 2)

    day_week = (np.arange(T) // 7)
    price = weekly_price[:, day_week]
    wday = calendar['wday'].to_numpy()[:T] - 1
    state_of = catalog['state_id'].to_numpy()
    snap = np.vstack([calendar[f'snap_{state}'].to_numpy()[:T] for state in state_of])
    event = calendar['event_name_1'].notna().to_numpy()[:T]
    rate = (level[:, None] * season[wday][None, :]
            * (base_price[item_pos, None] / price) ** 1.5
            * (1.0 + 0.1 * snap) * (1.0 + 0.3 * event[None, :]))
    nonzero = rng.random((n_series, T)) >= intermittency
    values = np.where(nonzero, 1 + rng.poisson(rate), 0).astype(np.float64)
    released = day_week[None, :] >= release_week[:, None]
    values[~released] = 0.0

    records = []
    for row in range(n_series):
        for week in range(int(release_week[row]), n_weeks):
            records.append((catalog.at[row, 'store_id'], catalog.at[row, 'item_id'],
                            _FIRST_WEEK + week, float(weekly_price[row, week])))
    prices = pd.DataFrame(records, columns=list(PRICE_COLUMNS))

    hierarchy = build_m5_hierarchy(
        list(zip(catalog['item_id'], catalog['dept_id'], catalog['cat_id'],
                 catalog['store_id'], catalog['state_id'])))
    sales = SeriesMatrix(values, np.arange(1, T + 1), tuple(catalog['id']))
    return PanelDataset(sales=sales, calendar=calendar, prices=prices, hierarchy=hierarchy,
                        catalog=catalog, train_end=T, horizon=horizon)


def split_frames(ds: PanelDataset, frame: str) -> tuple[PanelDataset, SeriesMatrix]:
    """
    Hold out the validation or evaluation window.

    The evaluation frame holds out the final ``h`` observed days, the validation
    frame the ``h`` days before those, with the evaluation days removed.

    :raises DataError: unknown frame, or no training days remain.
    :returns: training dataset and the held-out actuals.
    """
    if frame not in FRAMES:
        raise DataError(f'frame must be one of {FRAMES}, got {frame!r}')
    h = ds.horizon
    cut = ds.train_end - (h if frame == 'evaluation' else 2 * h)
    first = int(ds.sales.time_index[0]) if ds.sales.length else 1
    if cut < first:
        raise DataError(f'{frame} frame of {ds.train_end} days leaves an empty training '
                        f'window (train ends on day {cut})')
    actuals = ds.sales.window(cut + 1, cut + h)
    train = dataclasses.replace(ds, sales=ds.sales.window(first, cut), train_end=cut)
    log.debug('%s frame: train days %d..%d, actuals %d..%d', frame, first, cut, cut + 1, cut + h)
    return train, actuals

"""
Aggregation hierarchy of bottom-level series.

A :class:`HierarchySpec` holds an ordered list of levels, level 1 being the
single grand total and level ``L`` the bottom series themselves.  Every upper
level node owns the list of bottom indices that sum into it; membership is kept
as index lists rather than a summing matrix, the M5 structure being very
sparse.  :meth:`HierarchySpec.summing_matrix` exports the dense form for
testing.

Node ordering within an upper level is lexicographic by grouping-key tuple,
the bottom level keeps catalog order so that aggregating to it is the identity.
"""
from __future__ import annotations

# std imports
import json
import logging
from typing import Any, Mapping, Sequence
from dataclasses import field, dataclass

# 3rd party
import numpy as np
import pandas as pd

# local
from .exceptions import HierarchyError

log = logging.getLogger(__name__)

#: Fields of a catalog record, in the tuple order accepted by build_m5_hierarchy().
CATALOG_FIELDS = ('item', 'dept', 'category', 'store', 'state')

#: The twelve levels of the M5 competition: (label, grouping keys).
M5_LEVELS = (
    ('Total', ()),
    ('State', ('state',)),
    ('Store', ('store',)),
    ('Category', ('category',)),
    ('Department', ('dept',)),
    ('State x Category', ('state', 'category')),
    ('State x Department', ('state', 'dept')),
    ('Store x Category', ('store', 'category')),
    ('Store x Department', ('store', 'dept')),
    ('Item', ('item',)),
    ('Item x State', ('item', 'state')),
    ('Item x Store', ('item', 'store')),
)

AGGREGATIONS = ('sum', 'mean')


@dataclass(frozen=True)
class Level:
    """One aggregation level."""
    id: int
    label: str
    keys: tuple[str, ...]


@dataclass(frozen=True)
class Node:
    """A series of an aggregation level and the bottom indices it sums."""
    level: int
    id: str
    key: tuple[str, ...]
    members: tuple[int, ...]


def _node_id(key):
    return '_'.join(key) if key else 'Total'


@dataclass(frozen=True)
class HierarchySpec:
    """
    Multi-level aggregation structure.

    :param tuple levels: :class:`Level` descriptors, ids ``1..L`` in order.
    :param tuple bottom_keys: ``(item, store)`` of each bottom series, in row order.
    :param dict nodes: level id to the tuple of its :class:`Node` records.
    """
    levels: tuple[Level, ...]
    bottom_keys: tuple[tuple[str, ...], ...]
    nodes: Mapping[int, tuple[Node, ...]]
    _plans: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def bottom_level(self) -> int:
        return self.levels[-1].id

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_bottom(self) -> int:
        return len(self.bottom_keys)

    @property
    def membership(self) -> dict[int, list[tuple[int, ...]]]:
        """Level id to the member index lists of its nodes."""
        return {lvl: [node.members for node in nodes] for lvl, nodes in self.nodes.items()}

    @property
    def node_counts(self) -> list[int]:
        return [len(self.nodes[level.id]) for level in self.levels]

    @property
    def total_nodes(self) -> int:
        return sum(self.node_counts)

    def level(self, level_id: int) -> Level:
        """
        Return the level descriptor of ``level_id``.

        :raises HierarchyError: unknown level id.
        """
        for level in self.levels:
            if level.id == level_id:
                return level
        raise HierarchyError(f'unknown level id {level_id!r}, '
                             f'expected one of {[lvl.id for lvl in self.levels]}')

    def nodes_at(self, level_id: int) -> tuple[Node, ...]:
        self.level(level_id)
        return self.nodes[level_id]

    def series_ids(self, level_id: int | None = None) -> tuple[str, ...]:
        """Node ids of one level, or of every level stacked 1..L."""
        if level_id is not None:
            return tuple(node.id for node in self.nodes_at(level_id))
        return tuple(node.id for level in self.levels for node in self.nodes[level.id])

    def reduce_plan(self, level_id: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Gather order, segment offsets and member counts of a level.

        ``np.add.reduceat(values[order], offsets)`` yields node sums, each node's
        members added sequentially in ascending index order.
        """
        if level_id not in self._plans:
            nodes = self.nodes_at(level_id)
            counts = np.array([len(node.members) for node in nodes], dtype=np.int64)
            order = np.fromiter((idx for node in nodes for idx in node.members),
                                dtype=np.int64, count=int(counts.sum()))
            offsets = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
            self._plans[level_id] = (order, offsets, counts)
        return self._plans[level_id]

    def summing_matrix(self) -> np.ndarray:
        """Dense ``[total_nodes x n_bottom]`` 0/1 matrix, rows ordered level 1..L."""
        matrix = np.zeros((self.total_nodes, self.n_bottom), dtype=np.int8)
        row = 0
        for level in self.levels:
            for node in self.nodes[level.id]:
                matrix[row, list(node.members)] = 1
                row += 1
        return matrix

    def to_json(self) -> str:
        """Serialize as a JSON document of levels and node records."""
        return json.dumps({
            'schema_version': 1,
            'levels': [{'level': lvl.id, 'label': lvl.label, 'keys': list(lvl.keys)}
                       for lvl in self.levels],
            'bottom_keys': [list(key) for key in self.bottom_keys],
            'nodes': [{'level': node.level, 'id': node.id, 'key': list(node.key),
                       'member_indices': list(node.members)}
                      for lvl in self.levels for node in self.nodes[lvl.id]],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> HierarchySpec:
        doc = json.loads(text)
        if doc.get('schema_version') != 1:
            raise HierarchyError(f"unsupported hierarchy schema {doc.get('schema_version')!r}")
        levels = tuple(Level(rec['level'], rec['label'], tuple(rec['keys']))
                       for rec in doc['levels'])
        nodes: dict[int, list[Node]] = {lvl.id: [] for lvl in levels}
        for rec in doc['nodes']:
            if rec['level'] not in nodes:
                raise HierarchyError(f"node {rec['id']!r} refers to unknown level {rec['level']!r}")
            nodes[rec['level']].append(Node(rec['level'], rec['id'], tuple(rec['key']),
                                            tuple(rec['member_indices'])))
        return cls(levels=levels,
                   bottom_keys=tuple(tuple(key) for key in doc['bottom_keys']),
                   nodes={lvl: tuple(lst) for lvl, lst in nodes.items()})


@dataclass(frozen=True)
class SeriesMatrix:
    """
    Aligned daily series, one row per series.

    :param numpy.ndarray values: ``[series x time]`` unit sales or forecasts.
    :param numpy.ndarray time_index: consecutive day numbers, length ``T``.
    :param tuple series_ids: one identifier per row.
    :param tuple levels: optional level id of each row.
    """
    values: np.ndarray
    time_index: np.ndarray
    series_ids: tuple[str, ...]
    levels: tuple[int, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise HierarchyError(f'series values must be 2-D, got shape {values.shape}')
        time_index = np.asarray(self.time_index, dtype=np.int64)
        if time_index.ndim != 1 or len(time_index) != values.shape[1]:
            raise HierarchyError(f'time index of length {len(time_index)} does not match '
                                 f'{values.shape[1]} columns')
        if len(time_index) > 1 and np.any(np.diff(time_index) != 1):
            raise HierarchyError('time index must be strictly increasing without gaps')
        series_ids = tuple(self.series_ids)
        if len(series_ids) != values.shape[0]:
            raise HierarchyError(f'{len(series_ids)} series ids for {values.shape[0]} rows')
        if self.levels is not None and len(self.levels) != values.shape[0]:
            raise HierarchyError(f'{len(self.levels)} level ids for {values.shape[0]} rows')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'time_index', time_index)
        object.__setattr__(self, 'series_ids', series_ids)
        if self.levels is not None:
            object.__setattr__(self, 'levels', tuple(self.levels))

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def window(self, first_day: int, last_day: int) -> SeriesMatrix:
        """Columns of days ``first_day..last_day`` inclusive."""
        if self.length == 0 or first_day < self.time_index[0] or last_day > self.time_index[-1]:
            raise HierarchyError(f'window {first_day}..{last_day} outside of '
                                 f'{self.time_index[:1]}..{self.time_index[-1:]}')
        lo = first_day - int(self.time_index[0])
        hi = last_day - int(self.time_index[0]) + 1
        return SeriesMatrix(self.values[:, lo:hi], self.time_index[lo:hi],
                            self.series_ids, self.levels)

    def rows(self, indices: Sequence[int]) -> SeriesMatrix:
        indices = list(indices)
        levels = None if self.levels is None else tuple(self.levels[i] for i in indices)
        return SeriesMatrix(self.values[indices], self.time_index,
                            tuple(self.series_ids[i] for i in indices), levels)

    def at_levels(self, level_ids: Sequence[int]) -> SeriesMatrix:
        """Rows belonging to the given level ids, requires ``levels``."""
        if self.levels is None:
            raise HierarchyError('series matrix carries no level ids')
        wanted = set(level_ids)
        return self.rows([i for i, lvl in enumerate(self.levels) if lvl in wanted])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[f'd_{d}' for d in self.time_index])
        frame.insert(0, 'id', list(self.series_ids))
        if self.levels is not None:
            frame.insert(1, 'level', list(self.levels))
        return frame

    def to_csv(self, path) -> None:
        """Write in the wide ``id,[level,]d_<n>,...`` layout."""
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path) -> SeriesMatrix:
        frame = pd.read_csv(path, dtype={'id': str}, float_precision='round_trip')
        day_cols = [col for col in frame.columns if col.startswith('d_')]
        levels = tuple(int(v) for v in frame['level']) if 'level' in frame.columns else None
        return cls(frame[day_cols].to_numpy(dtype=np.float64),
                   np.array([int(col[2:]) for col in day_cols], dtype=np.int64),
                   tuple(frame['id']), levels)


def build_hierarchy(records: Sequence[Mapping[str, Any]],
                    levels: Sequence[tuple[str, tuple[str, ...]]],
                    bottom_fields: tuple[str, ...] = ('item', 'store')) -> HierarchySpec:
    """
    Build a hierarchy from catalog records and level definitions.

    :param records: one mapping per bottom series, in row order.
    :param levels: ``(label, grouping keys)`` per level, top level first; the
        last level must group by ``bottom_fields``.
    :param bottom_fields: fields identifying a bottom series.
    :raises HierarchyError: duplicate bottom key, or a malformed level list.
    :rtype: HierarchySpec
    """
    if not records:
        raise HierarchyError('catalog is empty')
    if not levels or tuple(levels[-1][1]) != tuple(bottom_fields):
        raise HierarchyError(f'last level must group by {bottom_fields!r}')
    if tuple(levels[0][1]):
        log.debug('top level groups by %r, not a single total', levels[0][1])

    bottom_keys = []
    seen = set()
    for record in records:
        key = tuple(str(record[name]) for name in bottom_fields)
        if key in seen:
            raise HierarchyError(f'duplicate bottom key {key!r}')
        seen.add(key)
        bottom_keys.append(key)

    level_objs = []
    nodes: dict[int, tuple[Node, ...]] = {}
    for level_id, (label, keys) in enumerate(levels, start=1):
        keys = tuple(keys)
        level_objs.append(Level(level_id, label, keys))
        if level_id == len(levels):
            nodes[level_id] = tuple(Node(level_id, _node_id(key), key, (idx,))
                                    for idx, key in enumerate(bottom_keys))
            continue
        groups: dict[tuple[str, ...], list[int]] = {}
        for idx, record in enumerate(records):
            groups.setdefault(tuple(str(record[name]) for name in keys), []).append(idx)
        nodes[level_id] = tuple(Node(level_id, _node_id(key), key, tuple(groups[key]))
                                for key in sorted(groups))
    return HierarchySpec(levels=tuple(level_objs), bottom_keys=tuple(bottom_keys), nodes=nodes)


def build_m5_hierarchy(catalog: Sequence[Sequence[str] | Mapping[str, str]]) -> HierarchySpec:
    """
    Build the 12-level M5 hierarchy.

    :param catalog: ``(item, dept, category, store, state)`` tuples, or mappings
        with those keys, one per bottom series in row order.
    :raises HierarchyError: duplicate ``(item, store)``, or an item whose
        department or category differs between records, or a store found in
        two states.
    :rtype: HierarchySpec

    >>> build_m5_hierarchy([('A_1_001', 'A_1', 'A', 'CA_1', 'CA')]).node_counts
    [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]
    """
    records = [dict(entry) if isinstance(entry, Mapping) else dict(zip(CATALOG_FIELDS, entry))
               for entry in catalog]
    item_attrs: dict[str, tuple[str, str]] = {}
    store_state: dict[str, str] = {}
    for record in records:
        attrs = (record['dept'], record['category'])
        if item_attrs.setdefault(record['item'], attrs) != attrs:
            raise HierarchyError(f"item {record['item']!r} has inconsistent department/category "
                                 f"{item_attrs[record['item']]!r} and {attrs!r}")
        if store_state.setdefault(record['store'], record['state']) != record['state']:
            raise HierarchyError(f"store {record['store']!r} is listed in states "
                                 f"{store_state[record['store']]!r} and {record['state']!r}")
    return build_hierarchy(records, M5_LEVELS)


def _check_bottom(spec: HierarchySpec, bottom: SeriesMatrix) -> None:
    if bottom.n_series != spec.n_bottom:
        raise HierarchyError(f'{bottom.n_series} bottom rows for a hierarchy of '
                             f'{spec.n_bottom} bottom series')


def aggregate(spec: HierarchySpec, bottom: SeriesMatrix, target_level: int,
              how: str = 'sum') -> SeriesMatrix:
    """
    Aggregate bottom series to the nodes of ``target_level``.

    :param HierarchySpec spec: the hierarchy.
    :param SeriesMatrix bottom: rows in ``spec.bottom_keys`` order.
    :param int target_level: level id to aggregate to.
    :param str how: ``'sum'`` (coherent, default) or ``'mean'`` over members.
    :raises HierarchyError: unknown level id or misaligned rows.
    :rtype: SeriesMatrix
    """
    if how not in AGGREGATIONS:
        raise ValueError(f'aggregation must be one of {AGGREGATIONS}, got {how!r}')
    spec.level(target_level)
    _check_bottom(spec, bottom)
    ids = spec.series_ids(target_level)
    n_ids = len(ids)
    if target_level == spec.bottom_level:
        return SeriesMatrix(bottom.values, bottom.time_index, ids, (target_level,) * n_ids)
    order, offsets, counts = spec.reduce_plan(target_level)
    if bottom.length == 0:
        values = np.zeros((n_ids, 0), dtype=bottom.values.dtype)
    else:
        values = np.add.reduceat(bottom.values[order], offsets, axis=0)
    if how == 'mean':
        values = values / counts[:, None]
    return SeriesMatrix(values, bottom.time_index, ids, (target_level,) * n_ids)


def enumerate_all_series(spec: HierarchySpec, bottom: SeriesMatrix,
                         how: str = 'sum') -> SeriesMatrix:
    """
    Stack every level's aggregate, level 1 first.

    :rtype: SeriesMatrix
    :returns: one row per node of every level, ``levels`` filled in.
    """
    parts = [aggregate(spec, bottom, level.id, how) for level in spec.levels]
    values = np.vstack([part.values for part in parts])
    return SeriesMatrix(values, bottom.time_index,
                        tuple(sid for part in parts for sid in part.series_ids),
                        tuple(lvl for part in parts for lvl in part.levels))


"""
Pipeline configuration.

A single TOML document with the tables ``[data]``, ``[synthetic]``, ``[run]``,
``[gbm]``, ``[basisnet]`` and ``[alignment]``.  Every key is optional; unknown
keys are errors.  Example::

    [synthetic]
    seed = 7
    n_items = 20
    n_stores = 2

    [run]
    frame = "validation"
    out = "runs/smoke"

    [alignment]
    grid = "0.05:2.0:0.05"
"""
from __future__ import annotations

# std imports
import os
import sys
import dataclasses
from typing import Any, Mapping
from dataclasses import field, asdict, dataclass

# local
from .gbm import GBMConfig
from .dataio import FRAMES
from .seeding import stage_seed
from .basisnet import TrainConfig, EnsembleConfig
from .hierarchy import AGGREGATIONS
from .alignment import check_grid, default_grid
from .exceptions import ConfigError

if sys.version_info >= (3, 11):
    # std imports
    import tomllib
else:
    # 3rd party
    import tomli as tomllib

__all__ = ('PipelineConfig', 'load_config', 'parse_grid', 'stage_seed')


@dataclass(frozen=True)
class DataConfig:
    """Paths of the M5 CSV files; all empty selects the synthetic generator."""
    sales: str = ''
    calendar: str = ''
    prices: str = ''

    @property
    def synthetic(self) -> bool:
        return not (self.sales or self.calendar or self.prices)

    def check_paths(self) -> None:
        for name in ('sales', 'calendar', 'prices'):
            path = getattr(self, name)
            if not path:
                raise ConfigError(f'data.{name} is required when any data path is given')
            if not os.path.exists(path):
                raise ConfigError(f'data.{name}: no such file {path!r}')


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 7
    n_items: int = 20
    n_stores: int = 2
    T: int = 400
    intermittency: float = 0.6


@dataclass(frozen=True)
class RunConfig:
    frame: str = 'validation'
    out: str = 'hfalign-run'
    seed: int = 0
    threads: int = 1
    weight_window: int = 28
    aggregation: str = 'sum'
    top_levels: tuple = (1, 2, 3, 4, 5)
    resume: bool = False

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ConfigError(f'run.frame must be one of {FRAMES}, got {self.frame!r}')
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f'run.aggregation must be one of {AGGREGATIONS}, '
                              f'got {self.aggregation!r}')
        if self.threads < 1:
            raise ConfigError(f'run.threads must be >= 1, got {self.threads!r}')
        if self.weight_window < 1:
            raise ConfigError(f'run.weight_window must be >= 1, got {self.weight_window!r}')
        if 1 not in self.top_levels:
            raise ConfigError('run.top_levels must include level 1')


@dataclass(frozen=True)
class AlignmentConfig:
    grid: tuple = tuple(default_grid())
    refine: bool = False
    levels: tuple = (1,)
    neighborhood_size: int = 5

    def __post_init__(self):
        check_grid(self.grid)
        if self.neighborhood_size < 1:
            raise ConfigError('alignment.neighborhood_size must be >= 1')


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    run: RunConfig = field(default_factory=RunConfig)
    gbm: GBMConfig = field(default_factory=GBMConfig)
    basisnet: TrainConfig = field(default_factory=TrainConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)

    def to_dict(self) -> dict:
        """Plain-data echo of the configuration."""
        doc = asdict(self)
        doc['basisnet'].update(doc.pop('ensemble'))
        return doc

    def seed_for(self, stage: str) -> int:
        return stage_seed(self.run.seed, stage)


_NET_KEYS = ('n_blocks', 'depth', 'width')
_ENSEMBLE_KEYS = ('context_multiples', 'bagging_size', 'loss_metrics')


def parse_grid(text) -> tuple[float, ...]:
    """
    Parse ``"start:stop:step"`` (stop inclusive) or ``"a,b,c"``.

    >>> parse_grid('0.9:1.0:0.05')
    (0.9, 0.95, 1.0)
    """
    if isinstance(text, (list, tuple)):
        return tuple(check_grid(text))
    text = str(text).strip()
    try:
        if ':' in text:
            start, stop, step = (float(part) for part in text.split(':'))
            if step <= 0:
                raise ConfigError(f'grid step must be positive in {text!r}')
            count = int(round((stop - start) / step))
            values = [round(start + step * k, 10) for k in range(count + 1)]
        else:
            values = [float(part) for part in text.split(',') if part.strip()]
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f'cannot parse lambda grid {text!r}: {err}') from err
    return tuple(check_grid(values))


def _section(cls, table: Mapping[str, Any], name: str, convert=None):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f'unknown key {name}.{unknown[0]}')
    values = dict(table)
    for key, value in values.items():
        if isinstance(value, list):
            values[key] = tuple(value)
    if convert:
        values = convert(values)
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f'invalid [{name}] section: {err}') from err


def from_dict(doc: Mapping[str, Any]) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from parsed TOML."""
    sections = ('data', 'synthetic', 'run', 'gbm', 'basisnet', 'alignment')
    unknown = sorted(set(doc) - set(sections))
    if unknown:
        raise ConfigError(f'unknown section [{unknown[0]}]')
    basisnet = dict(doc.get('basisnet', {}))
    ensemble = {key: basisnet.pop(key) for key in _ENSEMBLE_KEYS if key in basisnet}
    net = {key: basisnet.pop(key) for key in _NET_KEYS if key in basisnet}
    defaults = EnsembleConfig().net
    ensemble['net'] = {**defaults, **net}

    def _grid(values):
        if 'grid' in values:
            values['grid'] = parse_grid(values['grid'])
        return values

    return PipelineConfig(
        data=_section(DataConfig, doc.get('data', {}), 'data'),
        synthetic=_section(SyntheticConfig, doc.get('synthetic', {}), 'synthetic'),
        run=_section(RunConfig, doc.get('run', {}), 'run'),
        gbm=_section(GBMConfig, doc.get('gbm', {}), 'gbm'),
        basisnet=_section(TrainConfig, basisnet, 'basisnet'),
        ensemble=_section(EnsembleConfig, ensemble, 'basisnet'),
        alignment=_section(AlignmentConfig, doc.get('alignment', {}), 'alignment', _grid),
    )


def load_config(path=None, **overrides) -> PipelineConfig:
    """
    Load a TOML file, then apply command-line overrides.

    :param path: TOML file, or None for defaults.
    :param overrides: any of ``frame``, ``seed``, ``threads``, ``out`` (run
        table) and ``grid``; None values are ignored.
    :raises ConfigError: unreadable file, unknown key, or invalid value.
    """
    doc: dict = {}
    if path is not None:
        try:
            with open(path, 'rb') as fin:
                doc = tomllib.load(fin)
        except OSError as err:
            raise ConfigError(f'cannot read config {path!r}: {err}') from err
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f'invalid TOML in {path!r}: {err}') from err
    for key, value in doc.items():
        if not isinstance(value, dict):
            raise ConfigError(f'{key} must be a table, got {value!r}')
    doc = {key: dict(value) for key, value in doc.items()}
    for key in ('frame', 'seed', 'threads', 'out'):
        if overrides.get(key) is not None:
            doc.setdefault('run', {})[key] = overrides[key]
    if overrides.get('grid') is not None:
        doc.setdefault('alignment', {})['grid'] = overrides['grid']
    return from_dict(doc)

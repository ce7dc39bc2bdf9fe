"""
Doubly residual basis-expansion network for upper-level series.

Each block runs a fully connected ReLU trunk over its input and emits a
backcast, subtracted from the input before the next block, and a forecast,
summed into the network output.  Members are trained on windows sampled
uniformly over ``(series, start)`` pairs, by SGD wrapped in
:class:`~hfalign.lookahead.Lookahead`, and combined by an elementwise median.
"""
from __future__ import annotations

# std imports
import json
import logging
import contextlib
from typing import Sequence
from dataclasses import field, asdict, dataclass

# 3rd party
import numpy as np
import torch
import pandas as pd
from torch import nn
from joblib import Parallel, delayed

# local
from .metrics import smape
from .seeding import stage_seed
from .hierarchy import SeriesMatrix
from .lookahead import Lookahead
from .exceptions import DataError, ConfigError, SchemaError, TrainingError

log = logging.getLogger(__name__)

NET_SCHEMA_VERSION = 1
LOSS_METRICS = ('smape', 'mase', 'mape')
DTYPE = torch.float64


@dataclass(frozen=True)
class NetConfig:
    """Network shape: ``n_blocks`` generic blocks of ``depth`` layers of ``width``."""
    context_length: int
    horizon: int = 28
    n_blocks: int = 2
    depth: int = 4
    width: int = 64

    def __post_init__(self):
        for name in ('context_length', 'horizon', 'n_blocks', 'depth', 'width'):
            if getattr(self, name) < 1:
                raise ConfigError(f'basisnet.{name} must be >= 1, got {getattr(self, name)!r}')


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings of one ensemble member."""
    epochs: int = 10
    batches_per_epoch: int = 1000
    batch_size: int = 16
    learning_rate: float = 0.0006
    loss_metric: str = 'smape'
    lookahead: bool = True
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    mase_season: int = 7
    seed: int = 0

    def __post_init__(self):
        for name in ('epochs', 'batches_per_epoch', 'batch_size', 'lookahead_k', 'mase_season'):
            if getattr(self, name) < 1:
                raise ConfigError(f'basisnet.{name} must be >= 1, got {getattr(self, name)!r}')
        if not self.learning_rate > 0:
            raise ConfigError(f'basisnet.learning_rate must be positive, got {self.learning_rate!r}')
        if self.loss_metric not in LOSS_METRICS:
            raise ConfigError(f'basisnet.loss_metric must be one of {LOSS_METRICS}, '
                              f'got {self.loss_metric!r}')
        if not 0.0 < self.lookahead_alpha <= 1.0:
            raise ConfigError(f'basisnet.lookahead_alpha must be in (0, 1], '
                              f'got {self.lookahead_alpha!r}')


class Block(nn.Module):
    """Fully connected trunk with a backcast head and a forecast head."""

    def __init__(self, context_length: int, horizon: int, depth: int, width: int):
        super().__init__()
        layers = []
        size = context_length
        for _ in range(depth):
            layers += [nn.Linear(size, width), nn.ReLU()]
            size = width
        self.trunk = nn.Sequential(*layers)
        self.backcast_head = nn.Linear(width, context_length)
        self.forecast_head = nn.Linear(width, horizon)

    def forward(self, x):
        hidden = self.trunk(x)
        return self.backcast_head(hidden), self.forecast_head(hidden)


class BasisNet(nn.Module):
    """
    Stack of :class:`Block` with doubly residual links.

    Parameters are drawn from ``torch`` seeded with ``seed`` inside a forked
    RNG, leaving the global generator untouched.
    """

    def __init__(self, config: NetConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        self.training_log: list[tuple[int, float]] = []
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.blocks = nn.ModuleList(
                Block(config.context_length, config.horizon, config.depth, config.width)
                for _ in range(config.n_blocks))
        self.to(DTYPE)

    @property
    def context_length(self) -> int:
        return self.config.context_length

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def forward(self, x):
        residual = x
        forecast = torch.zeros(x.shape[:-1] + (self.horizon,), dtype=x.dtype)
        for block in self.blocks:
            backcast, block_forecast = block(residual)
            residual = residual - backcast
            forecast = forecast + block_forecast
        return forecast

    def decompose(self, x):
        """Per-block backcasts and forecasts, and the final residual."""
        residual = x
        backcasts, forecasts = [], []
        for block in self.blocks:
            backcast, block_forecast = block(residual)
            backcasts.append(backcast)
            forecasts.append(block_forecast)
            residual = residual - backcast
        return backcasts, forecasts, residual

    def predict(self, context) -> np.ndarray:
        """
        Forecast from raw contexts, scaled by each context's mean absolute value.

        :param context: ``[context_length]`` or ``[rows x context_length]``.
        """
        x = torch.as_tensor(np.atleast_2d(np.asarray(context, dtype=np.float64)))
        scale = _window_scale(x)
        with torch.no_grad():
            out = self(x / scale) * scale
        out = out.numpy()
        return out[0] if np.ndim(context) == 1 else out

    def to_json(self) -> str:
        """Shapes and row-major weights of every parameter."""
        return json.dumps({
            'schema_version': NET_SCHEMA_VERSION,
            'config': asdict(self.config),
            'seed': self.seed,
            'training_log': [list(row) for row in self.training_log],
            'parameters': {name: {'shape': list(param.shape),
                                  'values': param.detach().reshape(-1).tolist()}
                           for name, param in self.state_dict().items()},
        })

    @classmethod
    def from_json(cls, text: str) -> BasisNet:
        doc = json.loads(text)
        if doc.get('schema_version') != NET_SCHEMA_VERSION:
            raise SchemaError(f"unsupported network schema {doc.get('schema_version')!r}")
        net = cls(NetConfig(**doc['config']), doc['seed'])
        state = {name: torch.tensor(rec['values'], dtype=DTYPE).reshape(rec['shape'])
                 for name, rec in doc['parameters'].items()}
        net.load_state_dict(state)
        net.training_log = [(int(epoch), float(loss)) for epoch, loss in doc['training_log']]
        return net


def _window_scale(x):
    scale = x.abs().mean(dim=-1, keepdim=True)
    return torch.where(scale > 0, scale, torch.ones_like(scale))


def forward(net: BasisNet, context) -> np.ndarray:
    """
    Unscaled network output for one context vector.

    :raises DataError: wrong length or non-finite values.
    """
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (net.context_length,):
        raise DataError(f'context of shape {context.shape}, network expects '
                        f'({net.context_length},)')
    if not np.all(np.isfinite(context)):
        raise DataError('context contains non-finite values')
    with torch.no_grad():
        return net(torch.as_tensor(context)[None, :])[0].numpy()


def _divide_no_nan(a, b):
    result = a / b
    return torch.where(torch.isfinite(result), result, torch.zeros_like(result))


def smape_loss(forecast, target, insample=None, season: int = 7):
    """sMAPE in percent, zero where forecast and target are both zero."""
    return 200.0 * torch.mean(_divide_no_nan(torch.abs(forecast - target),
                                             torch.abs(forecast) + torch.abs(target)))


def mape_loss(forecast, target, insample=None, season: int = 7):
    return 100.0 * torch.mean(_divide_no_nan(torch.abs(forecast - target), torch.abs(target)))


def mase_loss(forecast, target, insample, season: int = 7):
    """Absolute error scaled by each window's seasonal naive in-sample error."""
    scale = torch.mean(torch.abs(insample[:, season:] - insample[:, :-season]), dim=1)
    return torch.mean(_divide_no_nan(torch.abs(forecast - target), scale[:, None]))


LOSSES = {'smape': smape_loss, 'mape': mape_loss, 'mase': mase_loss}


@contextlib.contextmanager
def _single_thread():
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(threads)


def _eligible_rows(series: SeriesMatrix, needed: int) -> list[int]:
    rows = []
    for idx, sid in enumerate(series.series_ids):
        values = series.values[idx]
        if series.length < needed or not np.all(np.isfinite(values)):
            log.warning('series %s is too short for a %d-day window and is excluded',
                        sid, needed)
            continue
        rows.append(idx)
    if not rows:
        raise TrainingError(f'no series is long enough for a {needed}-day window')
    return rows


def _sample_batch(values, context_length, horizon, batch_size, rng):
    starts_max = values.shape[1] - context_length - horizon
    rows = rng.integers(0, values.shape[0], size=batch_size)
    starts = rng.integers(0, starts_max + 1, size=batch_size)
    offsets = np.arange(context_length + horizon)
    windows = values[rows[:, None], starts[:, None] + offsets[None, :]]
    return windows[:, :context_length], windows[:, context_length:]


def train_top(series: SeriesMatrix, config: TrainConfig, net_config: NetConfig,
              checkpoints: Sequence[int] = ()) -> BasisNet | tuple[BasisNet, dict]:
    """
    Train one network on upper-level series.

    :param SeriesMatrix series: training history, one row per series.
    :param TrainConfig config: optimization settings, ``seed`` included.
    :param NetConfig net_config: network shape and context length.
    :param checkpoints: epoch numbers whose weights to snapshot; when given,
        returns ``(net, {epoch: state_dict})``.
    :raises TrainingError: no series is long enough.

    Series shorter than ``context_length + horizon`` are excluded with a
    warning.  ``net.training_log`` holds ``(epoch, mean batch loss)``.
    """
    rows = _eligible_rows(series, net_config.context_length + net_config.horizon)
    values = series.values[rows].astype(np.float64)
    loss_fn = LOSSES[config.loss_metric]
    rng = np.random.default_rng(config.seed)
    net = BasisNet(net_config, config.seed)
    inner = torch.optim.SGD(net.parameters(), lr=config.learning_rate)
    optimizer = Lookahead(inner, config.lookahead_k, config.lookahead_alpha) \
        if config.lookahead else inner
    snapshots = {}
    with _single_thread():
        for epoch in range(1, config.epochs + 1):
            total = 0.0
            for _ in range(config.batches_per_epoch):
                context, target = _sample_batch(values, net_config.context_length,
                                                net_config.horizon, config.batch_size, rng)
                x = torch.as_tensor(context)
                y = torch.as_tensor(target)
                scale = _window_scale(x)
                optimizer.zero_grad()
                loss = loss_fn(net(x / scale), y / scale, x / scale, config.mase_season)
                loss.backward()
                optimizer.step()
                total += float(loss.item())
            net.training_log.append((epoch, total / config.batches_per_epoch))
            log.debug('member seed=%d context=%d epoch %d loss %.6f', config.seed,
                      net_config.context_length, epoch, net.training_log[-1][1])
            if epoch in checkpoints:
                snapshots[epoch] = {key: val.clone() for key, val in net.state_dict().items()}
    if not np.isfinite(net.training_log[-1][1]):
        raise TrainingError(f'training diverged, final loss {net.training_log[-1][1]}')
    return (net, snapshots) if checkpoints else net


def write_training_log(net: BasisNet, path) -> None:
    pd.DataFrame(net.training_log, columns=['epoch', 'loss']).to_csv(path, index=False)


@dataclass(frozen=True)
class EnsembleConfig:
    """Member pool: context multiples of ``h`` by bagging copies by loss metrics."""
    context_multiples: tuple = (3, 5, 7)
    bagging_size: int = 3
    loss_metrics: tuple = ('smape',)
    net: dict = field(default_factory=lambda: {'n_blocks': 2, 'depth': 4, 'width': 64})

    def __post_init__(self):
        if not self.context_multiples or min(self.context_multiples) < 1:
            raise ConfigError('basisnet.context_multiples must be positive integers')
        if self.bagging_size < 1:
            raise ConfigError(f'basisnet.bagging_size must be >= 1, got {self.bagging_size!r}')
        for metric in self.loss_metrics:
            if metric not in LOSS_METRICS:
                raise ConfigError(f'basisnet.loss_metrics: unknown metric {metric!r}')

    def members(self, config: TrainConfig, horizon: int):
        """``(name, TrainConfig, NetConfig)`` of every member, seeds derived from ``config.seed``."""
        for metric in self.loss_metrics:
            for multiple in self.context_multiples:
                for copy in range(self.bagging_size):
                    name = f'{metric}-{multiple}h-{copy}'
                    member_config = TrainConfig(**{**asdict(config), 'loss_metric': metric,
                                                   'seed': stage_seed(config.seed, name)})
                    yield name, member_config, NetConfig(context_length=multiple * horizon,
                                                         horizon=horizon, **self.net)


def _train_member(name, series, config, net_config):
    log.debug('training ensemble member %s', name)
    return train_top(series, config, net_config)


def train_ensemble(series: SeriesMatrix, config: TrainConfig, ensemble: EnsembleConfig,
                   horizon: int = 28, n_jobs: int = 1) -> list[BasisNet]:
    """Train every member of the pool; members are independent of ``n_jobs``."""
    specs = list(ensemble.members(config, horizon))
    return Parallel(n_jobs=n_jobs)(
        delayed(_train_member)(name, series, member_config, net_config)
        for name, member_config, net_config in specs)


def ensemble_forecast(members: Sequence, history) -> np.ndarray:
    """
    Elementwise median of member forecasts.

    :param members: objects with ``context_length`` and ``predict(context)``.
    :param history: ``[T]`` or ``[rows x T]``; each member reads its own
        trailing context.
    :raises TrainingError: no members.
    """
    if not members:
        raise TrainingError('an ensemble needs at least one member')
    history = np.asarray(history, dtype=np.float64)
    forecasts = []
    for member in members:
        if history.shape[-1] < member.context_length:
            raise DataError(f'history of {history.shape[-1]} days is shorter than a member '
                            f'context of {member.context_length}')
        forecasts.append(member.predict(history[..., -member.context_length:]))
    return np.median(np.stack(forecasts), axis=0)


def forecast_levels(members: Sequence, history: SeriesMatrix) -> SeriesMatrix:
    """Horizon forecast of every row of ``history`` by the member median."""
    values = ensemble_forecast(members, history.values)
    horizon = values.shape[1]
    first = int(history.time_index[-1]) + 1
    return SeriesMatrix(values, np.arange(first, first + horizon), history.series_ids,
                        history.levels)


def select_epochs(series: SeriesMatrix, config: TrainConfig, net_config: NetConfig,
                  candidates: Sequence[int]) -> tuple[int, dict[int, float]]:
    """
    Choose an epoch count by holding out the trailing horizon.

    One run trains for ``max(candidates)`` epochs on the series minus its last
    ``horizon`` days; each candidate's checkpoint forecasts that window and is
    scored by mean sMAPE over series.  Ties go to fewer epochs.

    :returns: best epoch count and the ``{epochs: smape}`` curve.
    """
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates or candidates[0] < 1:
        raise ConfigError(f'epoch candidates must be positive, got {candidates}')
    h = net_config.horizon
    if series.length <= h:
        raise TrainingError(f'series of {series.length} days cannot hold out {h} days')
    held_in = series.window(int(series.time_index[0]), int(series.time_index[-1]) - h)
    actual = series.values[:, -h:]
    run_config = TrainConfig(**{**asdict(config), 'epochs': candidates[-1]})
    net, snapshots = train_top(held_in, run_config, net_config, checkpoints=candidates)
    curve = {}
    for epochs in candidates:
        net.load_state_dict(snapshots[epochs])
        forecast = ensemble_forecast([net], held_in.values)
        curve[epochs] = float(np.mean([smape(a, f) for a, f in zip(actual, forecast)]))
    best = min(candidates, key=lambda epochs: (curve[epochs], epochs))
    return best, curve

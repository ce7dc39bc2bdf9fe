"""
Config-driven commands: ``run``, ``sweep``, ``report`` and ``synth``.

A run executes its stages in order and persists every artifact under the
``run.out`` directory::

    config.json                 configuration echo
    hierarchy.json              the hierarchy of the training data
    models/top/<member>.json    network weights, one file per ensemble member
    models/top/<member>.csv     per-epoch training loss
    models/top/echo.json        configuration the top forecast was produced with
    models/gbm/<lambda>-<store>.json
                                neighborhood boosted models
    forecasts/top.csv           top-level forecast, levels ``run.top_levels``
    forecasts/bottom.csv        neighborhood ensemble of bottom forecasts
    forecasts/bottom_long.csv   the same, keyed by ``(series_id, day)``
    forecasts/all_levels.csv    every level, aggregated from the bottom
    scores/scores.csv           per-series scores
    scores/summary.json         per-level summaries
    scores/alignment_curve.csv  alignment RMSE per multiplier
    report.json                 the run report
    timings.json                wall-clock seconds per stage

``report.json`` holds no timings, so identical inputs give identical bytes.
"""
from __future__ import annotations

# std imports
import os
import json
import math
import time
import logging
import contextlib
from typing import Any, Sequence
from dataclasses import field, replace, dataclass

# 3rd party
import numpy as np

# local
from .gbm import GBMConfig, write_predictions_csv
from .config import PipelineConfig
from .dataio import PanelDataset, load_m5, write_m5, split_frames, generate_synthetic
from .report import render_report
from .metrics import rmse, write_scores, dollar_weights, score_hierarchy
from .basisnet import BasisNet, forecast_levels, train_ensemble, write_training_log
from .features import FeatureCache
from .alignment import (AlignmentResult,
                        tune_lambda,
                        expost_sweep,
                        write_sweep_csv,
                        write_sweep_long_csv)
from .hierarchy import SeriesMatrix, enumerate_all_series
from .exceptions import DataError, StageError

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

STAGES = ('ingest', 'split', 'hierarchy', 'top', 'tune_lambda', 'ensemble',
          'enumerate', 'metrics', 'report')

REPORT_FILE = 'report.json'
RUN_FILES = ('config.json', REPORT_FILE, 'scores/summary.json', 'scores/alignment_curve.csv')


@dataclass
class RunReport:
    """
    Outcome of :func:`cmd_run`.

    :param list levels: one row per level: id, label, series count and the
        level means of each metric.
    :param float wrmsse_total: weighted RMSSE over all levels.
    :param float lambda_star: selected multiplier.
    :param tuple neighborhood: multipliers of the bottom ensemble.
    :param dict alignment: evaluated ``grid`` and its ``objective``.
    :param list top_check: per top level, RMSE of the top forecast and of the
        aggregated bottom ensemble against the held-out actuals.
    :param dict config: configuration echo.
    :param dict timings: wall-clock seconds per stage, not serialized.
    """
    frame: str
    seed: int
    levels: list
    wrmsse_total: float
    lambda_star: float
    neighborhood: tuple
    alignment: dict
    top_check: list
    config: dict
    failed: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'schema_version': REPORT_SCHEMA_VERSION,
            'frame': self.frame,
            'seed': self.seed,
            'lambda_star': self.lambda_star,
            'neighborhood': list(self.neighborhood),
            'wrmsse_total': _finite(self.wrmsse_total),
            'levels': [{key: _finite(val) for key, val in row.items()} for row in self.levels],
            'alignment': {'grid': list(self.alignment['grid']),
                          'objective': [_finite(val) for val in self.alignment['objective']]},
            'failed': {str(lam): message for lam, message in sorted(self.failed.items())},
            'top_check': [{key: _finite(val) for key, val in row.items()}
                          for row in self.top_check],
            'config': self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + '\n'


def _finite(value):
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _mkdirs(out: str, *names: str) -> dict[str, str]:
    paths = {name: os.path.join(out, name) for name in names}
    for path in paths.values():
        os.makedirs(path, exist_ok=True)
    return paths


def _write_json(path: str, doc: Any) -> None:
    with open(path, 'w', encoding='utf8') as fout:
        json.dump(doc, fout, indent=1, sort_keys=True)
        fout.write('\n')


@contextlib.contextmanager
def stage(name: str, timings: dict):
    """Time a stage, and wrap any error escaping it in :class:`StageError`."""
    log.info('stage %s', name)
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as err:
        log.error('stage %s failed: %s', name, err)
        raise StageError(name, err) from err
    finally:
        timings[name] = round(time.perf_counter() - start, 3)


def load_dataset(config: PipelineConfig) -> PanelDataset:
    """The configured M5 files, or the synthetic generator when no path is given."""
    if config.data.synthetic:
        syn = config.synthetic
        log.info('generating synthetic data: seed %d, %d items x %d stores, %d days',
                 syn.seed, syn.n_items, syn.n_stores, syn.T)
        return generate_synthetic(syn.seed, syn.n_items, syn.n_stores, syn.T, syn.intermittency)
    config.data.check_paths()
    return load_m5(config.data.sales, config.data.calendar, config.data.prices)


def _gbm_config(config: PipelineConfig) -> GBMConfig:
    return replace(config.gbm, seed=config.seed_for('gbm'))


def _report_echo(config: PipelineConfig) -> dict:
    # run-local settings that leave results unchanged
    doc = config.to_dict()
    for key in ('out', 'resume', 'threads'):
        del doc['run'][key]
    return json.loads(json.dumps(doc))


def _top_echo(config: PipelineConfig) -> dict:
    doc = config.to_dict()
    echo = {'data': doc['data'], 'synthetic': doc['synthetic'], 'basisnet': doc['basisnet'],
            'frame': config.run.frame, 'seed': config.run.seed,
            'aggregation': config.run.aggregation, 'top_levels': list(config.run.top_levels)}
    return json.loads(json.dumps(echo))


def top_history(train: PanelDataset, config: PipelineConfig) -> SeriesMatrix:
    """Training history of the levels ``run.top_levels``."""
    every = enumerate_all_series(train.hierarchy, train.sales, config.run.aggregation)
    return every.at_levels(config.run.top_levels)


def top_forecast(train: PanelDataset, config: PipelineConfig, out: str) -> SeriesMatrix:
    """
    Train the network ensemble on the upper levels and forecast the horizon.

    With ``run.resume`` a persisted forecast is reused when it was produced
    with the same configuration.
    """
    paths = _mkdirs(out, 'models/top', 'forecasts')
    echo_path = os.path.join(paths['models/top'], 'echo.json')
    forecast_path = os.path.join(paths['forecasts'], 'top.csv')
    echo = _top_echo(config)
    if config.run.resume and os.path.exists(echo_path) and os.path.exists(forecast_path):
        with open(echo_path, encoding='utf8') as fin:
            if json.load(fin) == echo:
                log.info('reusing top-level forecast %s', forecast_path)
                return SeriesMatrix.from_csv(forecast_path)
        log.info('configuration changed, top-level forecast is retrained')

    history = top_history(train, config)
    train_config = replace(config.basisnet, seed=config.seed_for('top'))
    names = [name for name, _, _ in config.ensemble.members(train_config, train.horizon)]
    members = train_ensemble(history, train_config, config.ensemble, train.horizon,
                             n_jobs=config.run.threads)
    for name, member in zip(names, members):
        with open(os.path.join(paths['models/top'], f'{name}.json'), 'w',
                  encoding='utf8') as fout:
            fout.write(member.to_json())
        write_training_log(member, os.path.join(paths['models/top'], f'{name}.csv'))
    forecast = forecast_levels(members, history)
    forecast.to_csv(forecast_path)
    _write_json(echo_path, echo)
    return forecast


def load_top_members(run_dir: str) -> list[BasisNet]:
    """Networks persisted by a run, in member-name order."""
    directory = os.path.join(run_dir, 'models', 'top')
    members = []
    for name in sorted(os.listdir(directory)):
        if name.endswith('.json') and name != 'echo.json':
            with open(os.path.join(directory, name), encoding='utf8') as fin:
                members.append(BasisNet.from_json(fin.read()))
    return members


def _save_neighborhood_models(result: AlignmentResult, out: str) -> None:
    directory = _mkdirs(out, 'models/gbm')['models/gbm']
    for lam, models in sorted(result.models.items()):
        for store, model in models.items():
            with open(os.path.join(directory, f'{lam:.2f}-{store}.json'), 'w',
                      encoding='utf8') as fout:
                fout.write(model.to_json())


def _top_check(top: SeriesMatrix, bottom_all: SeriesMatrix, actual_all: SeriesMatrix,
               spec, levels: Sequence[int]) -> list[dict]:
    rows = []
    for level in levels:
        top_rows = top.at_levels([level])
        bottom_rows = bottom_all.at_levels([level])
        actual_rows = actual_all.at_levels([level])
        rows.append({
            'level': level,
            'label': spec.level(level).label,
            'top_rmse': float(np.mean([rmse(a, f) for a, f in
                                       zip(actual_rows.values, top_rows.values)])),
            'bottom_rmse': float(np.mean([rmse(a, f) for a, f in
                                          zip(actual_rows.values, bottom_rows.values)])),
        })
    return rows


def cmd_run(config: PipelineConfig) -> RunReport:
    """
    Execute every stage and persist the artifacts under ``run.out``.

    :raises StageError: the first failing stage, artifacts written before it
        are kept.
    """
    out = config.run.out
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, 'config.json'), config.to_dict())
    timings: dict[str, float] = {}
    try:
        with stage('ingest', timings):
            ds = load_dataset(config)
        with stage('split', timings):
            train, actuals = split_frames(ds, config.run.frame)
            log.info('%s frame: training days 1..%d, held out %d..%d', config.run.frame,
                     train.train_end, actuals.time_index[0], actuals.time_index[-1])
        with stage('hierarchy', timings):
            spec = train.hierarchy
            with open(os.path.join(out, 'hierarchy.json'), 'w', encoding='utf8') as fout:
                fout.write(spec.to_json())
        with stage('top', timings):
            top = top_forecast(train, config, out)
        with stage('tune_lambda', timings):
            cache = FeatureCache(train)
            result = tune_lambda(train, top, config.alignment.grid, _gbm_config(config), cache,
                                 refine=config.alignment.refine, levels=config.alignment.levels,
                                 n_jobs=config.run.threads,
                                 neighborhood_size=config.alignment.neighborhood_size,
                                 how=config.run.aggregation)
            scores_dir = _mkdirs(out, 'scores')['scores']
            result.curve().to_csv(os.path.join(scores_dir, 'alignment_curve.csv'), index=False)
        with stage('ensemble', timings):
            bottom = result.ensemble_forecast
            forecasts_dir = _mkdirs(out, 'forecasts')['forecasts']
            bottom.to_csv(os.path.join(forecasts_dir, 'bottom.csv'))
            write_predictions_csv(bottom, os.path.join(forecasts_dir, 'bottom_long.csv'))
            _save_neighborhood_models(result, out)
        with stage('enumerate', timings):
            bottom_all = enumerate_all_series(spec, bottom, config.run.aggregation)
            bottom_all.to_csv(os.path.join(forecasts_dir, 'all_levels.csv'))
        with stage('metrics', timings):
            weights = dollar_weights(train, spec, config.run.weight_window)
            scores = score_hierarchy(spec, train.sales, actuals, bottom, weights)
            write_scores(scores, spec, scores_dir)
            actual_all = enumerate_all_series(spec, actuals, config.run.aggregation)
            check = _top_check(top, bottom_all, actual_all, spec, config.run.top_levels)
        with stage('report', timings):
            report = RunReport(
                frame=config.run.frame,
                seed=config.run.seed,
                levels=[{'level': level.id, 'label': level.label, **scores.level_summary[level.id]}
                        for level in spec.levels],
                wrmsse_total=scores.wrmsse_total,
                lambda_star=result.lambda_star,
                neighborhood=result.neighborhood,
                alignment={'grid': result.grid, 'objective': result.objective.tolist()},
                top_check=check,
                config=_report_echo(config),
                failed=result.failed,
                timings=timings)
            with open(os.path.join(out, REPORT_FILE), 'w', encoding='utf8') as fout:
                fout.write(report.to_json())
    finally:
        _write_json(os.path.join(out, 'timings.json'), timings)
    log.info('lambda* %s, WRMSSE %.4f, written to %s', report.lambda_star,
             report.wrmsse_total, out)
    return report


def cmd_sweep(config: PipelineConfig) -> list[dict]:
    """
    WRMSSE of every grid multiplier on the held-out frame.

    Writes ``scores/sweep.csv`` and ``scores/sweep_long.csv``; each row also
    carries the alignment RMSE against the top-level forecast.
    """
    out = config.run.out
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, 'config.json'), config.to_dict())
    timings: dict[str, float] = {}
    try:
        with stage('ingest', timings):
            ds = load_dataset(config)
        with stage('split', timings):
            train, actuals = split_frames(ds, config.run.frame)
        with stage('top', timings):
            top = top_forecast(train, config, out)
        with stage('sweep', timings):
            rows = expost_sweep(train, train.hierarchy, actuals, config.alignment.grid,
                                _gbm_config(config), top.at_levels([1]).values[0],
                                FeatureCache(train), config.run.threads,
                                config.run.weight_window)
            scores_dir = _mkdirs(out, 'scores')['scores']
            write_sweep_csv(rows, os.path.join(scores_dir, 'sweep.csv'))
            write_sweep_long_csv(rows, os.path.join(scores_dir, 'sweep_long.csv'))
    finally:
        _write_json(os.path.join(out, 'timings.json'), timings)
    best = min((row for row in rows if not math.isnan(row['wrmsse_total'])),
               key=lambda row: row['wrmsse_total'], default=None)
    if best is not None:
        log.info('sweep minimum WRMSSE %.4f at lambda %s', best['wrmsse_total'], best['lambda'])
    return rows


def read_report(run_dir: str) -> dict:
    """
    Load the ``report.json`` of a run directory.

    :raises DataError: the directory holds no report, the message lists the
        files a complete run writes.
    """
    path = os.path.join(run_dir, REPORT_FILE)
    if not os.path.isfile(path):
        missing = [name for name in RUN_FILES if not os.path.exists(os.path.join(run_dir, name))]
        raise DataError(f'{run_dir!r} is not a run directory, expected files: '
                        f'{", ".join(RUN_FILES)}; missing: {", ".join(missing)}')
    with open(path, encoding='utf8') as fin:
        return json.load(fin)


def cmd_report(run_dir: str, compare: Sequence[str] = ()) -> str:
    """
    Render the per-level table and the multiplier curve of one or more runs.

    The text is written to ``report.txt`` in ``run_dir`` and returned.
    """
    runs = [(os.path.basename(os.path.normpath(path)) or path, read_report(path))
            for path in (run_dir, *compare)]
    text = render_report(runs)
    with open(os.path.join(run_dir, 'report.txt'), 'w', encoding='utf8') as fout:
        fout.write(text)
    return text


def cmd_synth(out: str, seed: int = 7, n_items: int = 20, n_stores: int = 2, T: int = 400,
              intermittency: float = 0.6) -> dict[str, str]:
    """Write a synthetic dataset in the M5 CSV layout."""
    ds = generate_synthetic(seed, n_items, n_stores, T, intermittency)
    paths = write_m5(ds, out)
    log.info('wrote %d series over %d days to %s', ds.sales.n_series, ds.sales.length, out)
    return paths

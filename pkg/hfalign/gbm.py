"""
Gradient boosted regression trees with an asymmetric squared loss.

The loss multiplier ``lam`` scales the gradient and Hessian of residuals
``e = y - y_hat >= 0`` (under-forecasts), so ``lam > 1`` biases the ensemble
upward and ``lam < 1`` downward.  Trees are grown leaf-wise with Newton steps,
L1 soft-thresholding and L2 shrinkage of leaf values, row bagging and column
sampling by tree and by node.
"""
from __future__ import annotations

# std imports
import json
import math
import logging
import dataclasses
from typing import Sequence
from dataclasses import field, dataclass

# 3rd party
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

# local
from .dataio import PanelDataset
from .features import FeatureCache, FeatureMatrix
from .hierarchy import SeriesMatrix
from .exceptions import DataError, ConfigError, SchemaError

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1
BINNING_MODES = ('histogram', 'exact')


def loss_gradient(e, lam: float):
    """
    Gradient of the asymmetric loss with respect to the prediction.

    :param e: residual ``y - y_hat``, scalar or array.
    :param float lam: loss multiplier, applied where ``e >= 0``.
    :raises ConfigError: ``lam <= 0``.

    >>> loss_gradient(-2.0, 0.95), loss_gradient(3.0, 1.0)
    (4.0, -6.0)
    """
    _check_lambda(lam)
    e = np.asarray(e, dtype=np.float64)
    grad = np.where(e < 0, -2.0 * e, -2.0 * lam * e)
    return float(grad) if grad.ndim == 0 else grad


def loss_hessian(e, lam: float):
    """
    Hessian of the asymmetric loss, ``2`` below zero and ``2 * lam`` from zero up.

    >>> loss_hessian(-1.0, 0.5), loss_hessian(5.0, 2.0)
    (2.0, 4.0)
    """
    _check_lambda(lam)
    e = np.asarray(e, dtype=np.float64)
    hess = np.where(e < 0, 2.0, 2.0 * lam)
    return float(hess) if hess.ndim == 0 else hess


def loss_value(e, lam: float):
    """The loss itself: ``e**2`` for over-forecasts, ``lam * e**2`` otherwise."""
    _check_lambda(lam)
    e = np.asarray(e, dtype=np.float64)
    value = np.where(e < 0, e * e, lam * e * e)
    return float(value) if value.ndim == 0 else value


def _check_lambda(lam):
    if not lam > 0:
        raise ConfigError(f'loss multiplier must be positive, got {lam!r}')


@dataclass(frozen=True)
class AsymmetricLoss:
    """Squared loss whose under-forecast branch is scaled by ``lam``."""
    lam: float = 1.0

    def __post_init__(self):
        _check_lambda(self.lam)

    def gradient(self, target: np.ndarray, prediction: np.ndarray) -> np.ndarray:
        return loss_gradient(target - prediction, self.lam)

    def hessian(self, target: np.ndarray, prediction: np.ndarray) -> np.ndarray:
        return loss_hessian(target - prediction, self.lam)


@dataclass(frozen=True)
class GBMConfig:
    """Boosting hyperparameters, learning defaults from the M5 submission."""
    learning_rate: float = 0.2
    num_rounds: int = 200
    max_leaves: int = 31
    max_depth: int = -1
    min_data_in_leaf: int = 20
    min_sum_hessian: float = 1e-3
    lambda_l1: float = 0.5
    lambda_l2: float = 0.5
    min_gain_to_split: float = 0.0
    bagging_fraction: float = 0.85
    bagging_freq: int = 1
    colsample_bytree: float = 0.85
    colsample_bynode: float = 0.85
    binning: str = 'histogram'
    max_bin: int = 255
    base_score: float | None = None
    early_stopping_rounds: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ('bagging_fraction', 'colsample_bytree', 'colsample_bynode'):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f'gbm.{name} must be in (0, 1], got {value!r}')
        if self.num_rounds < 1:
            raise ConfigError(f'gbm.num_rounds must be >= 1, got {self.num_rounds!r}')
        if self.max_leaves < 1:
            raise ConfigError(f'gbm.max_leaves must be >= 1, got {self.max_leaves!r}')
        if self.min_data_in_leaf < 1:
            raise ConfigError(f'gbm.min_data_in_leaf must be >= 1, got {self.min_data_in_leaf!r}')
        if not self.learning_rate > 0:
            raise ConfigError(f'gbm.learning_rate must be positive, got {self.learning_rate!r}')
        if self.lambda_l1 < 0 or self.lambda_l2 < 0:
            raise ConfigError('gbm.lambda_l1 and gbm.lambda_l2 must be non-negative')
        if self.bagging_freq < 0:
            raise ConfigError(f'gbm.bagging_freq must be >= 0, got {self.bagging_freq!r}')
        if self.binning not in BINNING_MODES:
            raise ConfigError(f'gbm.binning must be one of {BINNING_MODES}, got {self.binning!r}')
        if self.max_bin < 2:
            raise ConfigError(f'gbm.max_bin must be >= 2, got {self.max_bin!r}')
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ConfigError('gbm.early_stopping_rounds must be >= 1 when set')


@dataclass
class Tree:
    """
    A regression tree stored as parallel node lists.

    Node ``0`` is the root.  A leaf has ``feature == -1``.  Internal numeric
    nodes send ``x <= threshold`` left; categorical nodes send codes found in
    ``categories`` left, and everything else (unknown codes too) right.
    """
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    categories: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(math.nan)
        self.categories.append(None)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    @property
    def n_leaves(self) -> int:
        return sum(1 for feat in self.feature if feat < 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index reached by each row of ``X``."""
        feature = np.asarray(self.feature, dtype=np.int64)
        threshold = np.asarray(self.threshold, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        is_cat = np.array([cats is not None for cats in self.categories], dtype=bool)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(feature[node] >= 0)
        while len(active):
            current = node[active]
            values = X[active, feature[current]]
            go_left = values <= threshold[current]
            for cat_node in np.unique(current[is_cat[current]]):
                mask = current == cat_node
                go_left[mask] = np.isin(values[mask], self.categories[cat_node])
            node[active] = np.where(go_left, left[current], right[current])
            active = active[feature[node[active]] >= 0]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value, dtype=np.float64)[self.apply(X)]

    def to_dict(self) -> dict:
        return {'feature': list(self.feature),
                'threshold': [None if math.isnan(t) else t for t in self.threshold],
                'categories': [None if c is None else list(c) for c in self.categories],
                'left': list(self.left), 'right': list(self.right), 'value': list(self.value)}

    @classmethod
    def from_dict(cls, doc: dict) -> Tree:
        return cls(feature=list(doc['feature']),
                   threshold=[math.nan if t is None else float(t) for t in doc['threshold']],
                   categories=[None if c is None else tuple(c) for c in doc['categories']],
                   left=list(doc['left']), right=list(doc['right']), value=list(doc['value']))


@dataclass
class BoostedModel:
    """
    A trained tree ensemble.

    Raw prediction is ``base_score + learning_rate * sum(tree outputs)``;
    :func:`predict` clips it at zero.
    """
    trees: list
    learning_rate: float
    base_score: float
    config: GBMConfig
    loss: AsymmetricLoss
    feature_names: tuple
    categorical: tuple
    codebook_hash: str | None = None
    valid_rmse: list = field(default_factory=list)

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_json(self) -> str:
        """Versioned JSON document of trees, config and code-book hash."""
        return json.dumps({
            'schema_version': MODEL_SCHEMA_VERSION,
            'lambda': self.loss.lam,
            'learning_rate': self.learning_rate,
            'base_score': self.base_score,
            'config': dataclasses.asdict(self.config),
            'feature_names': list(self.feature_names),
            'categorical': list(self.categorical),
            'codebook_hash': self.codebook_hash,
            'valid_rmse': list(self.valid_rmse),
            'trees': [tree.to_dict() for tree in self.trees],
        })

    @classmethod
    def from_json(cls, text: str) -> BoostedModel:
        doc = json.loads(text)
        if doc.get('schema_version') != MODEL_SCHEMA_VERSION:
            raise SchemaError(f"unsupported model schema {doc.get('schema_version')!r}")
        return cls(trees=[Tree.from_dict(tree) for tree in doc['trees']],
                   learning_rate=doc['learning_rate'], base_score=doc['base_score'],
                   config=GBMConfig(**doc['config']), loss=AsymmetricLoss(doc['lambda']),
                   feature_names=tuple(doc['feature_names']),
                   categorical=tuple(doc['categorical']),
                   codebook_hash=doc['codebook_hash'], valid_rmse=list(doc['valid_rmse']))


def _leaf_output(G, H, l1, l2):
    shrunk = np.sign(G) * np.maximum(np.abs(G) - l1, 0.0)
    return shrunk, H + l2


def _score(G, H, l1, l2):
    shrunk, denom = _leaf_output(G, H, l1, l2)
    with np.errstate(divide='ignore', invalid='ignore'):
        return shrunk * shrunk / denom


@dataclass(frozen=True)
class _Split:
    gain: float
    feature: int
    threshold: float
    categories: tuple | None


class _Bins:
    """Per-feature bin codes of the training matrix."""

    def __init__(self, X: np.ndarray, categorical: np.ndarray, mode: str, max_bin: int):
        self.codes = np.empty(X.shape, dtype=np.int32)
        self.edges = []
        for col in range(X.shape[1]):
            values = X[:, col]
            edges = np.unique(values)
            if mode == 'histogram' and not categorical[col] and len(edges) > max_bin:
                quantiles = np.linspace(0.0, 1.0, max_bin + 1)[1:]
                edges = np.unique(np.quantile(values, quantiles, method='inverted_cdf'))
            self.codes[:, col] = np.searchsorted(edges, values, side='left')
            self.edges.append(edges)


class _TreeGrower:
    """Grows one tree per boosting round over a fixed binned matrix."""

    def __init__(self, bins: _Bins, categorical: np.ndarray, config: GBMConfig):
        self.bins = bins
        self.categorical = categorical
        self.config = config

    def _scan(self, hg, hh, hc, G, H, C, parent):
        cfg = self.config
        GL, HL, CL = np.cumsum(hg)[:-1], np.cumsum(hh)[:-1], np.cumsum(hc)[:-1]
        GR, HR, CR = G - GL, H - HL, C - CL
        if not len(GL):
            return None
        gain = (_score(GL, HL, cfg.lambda_l1, cfg.lambda_l2)
                + _score(GR, HR, cfg.lambda_l1, cfg.lambda_l2) - parent)
        valid = ((CL >= cfg.min_data_in_leaf) & (CR >= cfg.min_data_in_leaf)
                 & (HL >= cfg.min_sum_hessian) & (HR >= cfg.min_sum_hessian)
                 & np.isfinite(gain))
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        if not gain[best] > cfg.min_gain_to_split:
            return None
        return float(gain[best]), best

    def find_split(self, rows, features, grad, hess):
        cfg = self.config
        g, h = grad[rows], hess[rows]
        G, H, C = g.sum(), h.sum(), len(rows)
        parent = _score(G, H, cfg.lambda_l1, cfg.lambda_l2)
        best = None
        for feat in features:
            edges = self.bins.edges[feat]
            codes = self.bins.codes[rows, feat]
            hg = np.bincount(codes, weights=g, minlength=len(edges))
            hh = np.bincount(codes, weights=h, minlength=len(edges))
            hc = np.bincount(codes, minlength=len(edges))
            if self.categorical[feat]:
                present = np.flatnonzero(hc > 0)
                if len(present) < 2:
                    continue
                order = present[np.argsort(hg[present] / hh[present], kind='stable')]
                found = self._scan(hg[order], hh[order], hc[order], G, H, C, parent)
                if found is not None and (best is None or found[0] > best.gain):
                    cats = tuple(sorted(int(edges[b]) for b in order[:found[1] + 1]))
                    best = _Split(found[0], int(feat), math.nan, cats)
            else:
                found = self._scan(hg, hh, hc, G, H, C, parent)
                if found is not None and (best is None or found[0] > best.gain):
                    best = _Split(found[0], int(feat), float(edges[found[1]]), None)
        return best

    def _goes_left(self, rows, split):
        codes = self.bins.codes[rows, split.feature]
        edges = self.bins.edges[split.feature]
        if split.categories is not None:
            return np.isin(edges[codes], split.categories)
        return edges[codes] <= split.threshold

    def _node_features(self, tree_features, rng):
        count = max(1, int(round(len(tree_features) * self.config.colsample_bynode)))
        return np.sort(rng.choice(tree_features, size=count, replace=False))

    def grow(self, bag, grad, hess, tree_features, rng) -> Tree:
        cfg = self.config
        tree = Tree()
        root = tree.add_node()
        # leaf node id -> (rows, depth, best split or None)
        open_leaves = {root: (bag, 0, None)}
        if cfg.max_leaves > 1:
            open_leaves[root] = (bag, 0, self.find_split(
                bag, self._node_features(tree_features, rng), grad, hess))
        n_leaves = 1
        while n_leaves < cfg.max_leaves:
            candidates = [(split.gain, -node) for node, (_, _, split) in open_leaves.items()
                          if split is not None]
            if not candidates:
                break
            node = -max(candidates)[1]
            rows, depth, split = open_leaves[node]
            goes_left = self._goes_left(rows, split)
            tree.feature[node] = split.feature
            tree.threshold[node] = split.threshold
            tree.categories[node] = split.categories
            for side, child_rows in (('left', rows[goes_left]), ('right', rows[~goes_left])):
                child = tree.add_node()
                getattr(tree, side)[node] = child
                child_split = None
                if cfg.max_depth <= 0 or depth + 1 < cfg.max_depth:
                    child_split = self.find_split(
                        child_rows, self._node_features(tree_features, rng), grad, hess)
                open_leaves[child] = (child_rows, depth + 1, child_split)
            del open_leaves[node]
            n_leaves += 1
        for node, (rows, _, _) in open_leaves.items():
            shrunk, denom = _leaf_output(grad[rows].sum(), hess[rows].sum(),
                                         cfg.lambda_l1, cfg.lambda_l2)
            tree.value[node] = float(-shrunk / denom) if denom > 0 else 0.0
        return tree


def train_arrays(X: np.ndarray, y: np.ndarray, categorical: Sequence[bool],
                 loss: AsymmetricLoss, config: GBMConfig,
                 valid: tuple[np.ndarray, np.ndarray] | None = None,
                 feature_names: Sequence[str] | None = None,
                 codebook_hash: str | None = None) -> BoostedModel:
    """
    Boost trees on a numeric matrix.

    :param numpy.ndarray X: ``[rows x features]``, categorical columns hold codes.
    :param numpy.ndarray y: target of each row.
    :param categorical: per-column flag.
    :param valid: optional ``(X, y)`` for early stopping on RMSE.
    :raises DataError: empty or misaligned data, or a non-finite target.
    :rtype: BoostedModel
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    categorical = np.asarray(categorical, dtype=bool)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError('empty training set')
    if X.shape[0] != len(y):
        raise DataError(f'{X.shape[0]} feature rows for {len(y)} targets')
    if len(categorical) != X.shape[1]:
        raise DataError(f'{len(categorical)} categorical flags for {X.shape[1]} columns')
    if not np.all(np.isfinite(y)):
        raise DataError(f'target has {int((~np.isfinite(y)).sum())} non-finite values')

    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n_rows, n_features = X.shape
    base_score = float(np.mean(y)) if cfg.base_score is None else float(cfg.base_score)
    grower = _TreeGrower(_Bins(X, categorical, cfg.binning, cfg.max_bin), categorical, cfg)
    names = tuple(feature_names) if feature_names is not None else tuple(
        f'f{col}' for col in range(n_features))
    model = BoostedModel(trees=[], learning_rate=cfg.learning_rate, base_score=base_score,
                         config=cfg, loss=loss, feature_names=names,
                         categorical=tuple(bool(c) for c in categorical),
                         codebook_hash=codebook_hash)

    use_valid = valid is not None and cfg.early_stopping_rounds is not None
    if use_valid:
        X_valid = np.asarray(valid[0], dtype=np.float64)
        y_valid = np.asarray(valid[1], dtype=np.float64)
        pred_valid = np.full(len(y_valid), base_score)
        best_round, best_rmse = 0, math.inf

    pred = np.full(n_rows, base_score)
    bag = np.arange(n_rows)
    tree_size = max(1, int(round(n_features * cfg.colsample_bytree)))
    bag_size = max(1, int(round(n_rows * cfg.bagging_fraction)))
    for round_no in range(cfg.num_rounds):
        if cfg.bagging_freq > 0 and cfg.bagging_fraction < 1.0 and round_no % cfg.bagging_freq == 0:
            bag = np.sort(rng.choice(n_rows, size=bag_size, replace=False))
        tree_features = np.sort(rng.choice(n_features, size=tree_size, replace=False))
        grad = loss.gradient(y, pred)
        hess = loss.hessian(y, pred)
        tree = grower.grow(bag, grad, hess, tree_features, rng)
        model.trees.append(tree)
        pred += cfg.learning_rate * tree.predict(X)

        if use_valid:
            pred_valid += cfg.learning_rate * tree.predict(X_valid)
            score = float(np.sqrt(np.mean((np.maximum(pred_valid, 0.0) - y_valid) ** 2)))
            model.valid_rmse.append(score)
            if score < best_rmse:
                best_round, best_rmse = round_no + 1, score
            elif round_no + 1 - best_round >= cfg.early_stopping_rounds:
                log.debug('early stopping at round %d, best %d (rmse %.6f)',
                          round_no + 1, best_round, best_rmse)
                break
    if use_valid:
        del model.trees[best_round:]
    return model


def train(features: FeatureMatrix, target, loss: AsymmetricLoss, config: GBMConfig,
          valid: tuple[FeatureMatrix, np.ndarray] | None = None) -> BoostedModel:
    """
    Train a boosted model on an encoded feature matrix.

    :raises DataError: rows and target differ in length, or no rows.
    :raises SchemaError: the matrix is not encoded.
    :rtype: BoostedModel
    """
    target = np.asarray(target, dtype=np.float64)
    if features.n_rows != len(target):
        raise DataError(f'{features.n_rows} feature rows for {len(target)} targets')
    if features.n_rows == 0:
        raise DataError('empty training set')
    valid_arrays = None
    if valid is not None:
        _check_schema(features.columns, features.codebook_hash(), valid[0])
        valid_arrays = (valid[0].to_array(), valid[1])
    return train_arrays(features.to_array(), target, features.categorical_mask(), loss, config,
                        valid_arrays, feature_names=features.columns,
                        codebook_hash=features.codebook_hash())


def _check_schema(names, codebook_hash, features: FeatureMatrix):
    columns = tuple(features.columns)
    if columns != tuple(names):
        missing = [col for col in names if col not in columns]
        extra = [col for col in columns if col not in names]
        raise SchemaError(f'feature columns differ from training: missing {missing}, '
                          f'unexpected {extra}' if missing or extra else
                          f'feature columns are ordered differently: {list(columns)}')
    if codebook_hash is not None and features.encoded and \
            features.codebook_hash() != codebook_hash:
        raise SchemaError('feature code books differ from the ones used in training')


def predict(model: BoostedModel, features: FeatureMatrix) -> np.ndarray:
    """
    Non-negative forecast of every feature row.

    :raises SchemaError: columns or code books differ from training.
    """
    _check_schema(model.feature_names, model.codebook_hash, features)
    if features.n_rows == 0:
        return np.zeros(0)
    return np.maximum(model.predict_raw(features.to_array()), 0.0)


def _holdout(features, target, last_day, horizon):
    """Split off the trailing ``horizon`` training days as a validation set."""
    held = features.days > last_day - horizon
    if held.all() or not held.any():
        return features, target, None
    return (features.subset(~held), target[~held],
            (features.subset(held), target[held]))


def _fit_store(store, features, target, loss, config, valid=None):
    log.debug('training store %s on %d rows, lambda %.3f', store, features.n_rows, loss.lam)
    return store, train(features, target, loss, config, valid)


def train_per_store(ds: PanelDataset, loss: AsymmetricLoss, config: GBMConfig,
                    cache: FeatureCache | None = None, n_jobs: int = 1) -> dict:
    """
    Train one model per store on that store's rows.

    Stores without post-release rows are skipped with a warning.  With
    ``config.early_stopping_rounds`` set, the last ``ds.horizon`` training days
    of each store are held out, the model is fitted on the days before them,
    and its round count is cut where the held-out RMSE was lowest.

    :returns: store id to :class:`BoostedModel`, in store order.
    """
    cache = cache or FeatureCache(ds)
    jobs = []
    for store in ds.stores:
        features, target = cache.train(store)
        if features.n_rows == 0:
            log.warning('store %s has no rows after release and is skipped', store)
            continue
        valid = None
        if config.early_stopping_rounds is not None:
            features, target, valid = _holdout(features, target, ds.train_end, ds.horizon)
            if valid is None:
                log.warning('store %s has no rows to hold out, early stopping is off', store)
        jobs.append((store, features, target, valid))
    if not jobs:
        raise DataError('no store has training rows')
    fitted = Parallel(n_jobs=n_jobs)(
        delayed(_fit_store)(store, features, target, loss, config, valid)
        for store, features, target, valid in jobs)
    return dict(fitted)


def forecast_bottom(models: dict, ds: PanelDataset, cache: FeatureCache | None = None) -> SeriesMatrix:
    """
    Horizon forecast of every bottom series.

    Rows before release and series of stores without a model forecast zero.
    """
    cache = cache or FeatureCache(ds)
    first = ds.train_end + 1
    values = np.zeros((ds.sales.n_series, ds.horizon), dtype=np.float64)
    for store, model in models.items():
        features = cache.horizon(store)
        if features.n_rows:
            values[features.series, features.days - first] = predict(model, features)
    return SeriesMatrix(values, np.arange(first, first + ds.horizon), ds.sales.series_ids)


def write_predictions_csv(forecast: SeriesMatrix, path) -> None:
    """Write forecasts in long format keyed by ``(series_id, day)``."""
    frame = pd.DataFrame({
        'series_id': np.repeat(np.asarray(forecast.series_ids, dtype=object), forecast.length),
        'day': np.tile(forecast.time_index, forecast.n_series),
        'forecast': forecast.values.reshape(-1),
    })
    frame.to_csv(path, index=False)

"""Binary classifiers and the rolling train/tune schedule.

Three families share one interface: ``logreg`` (batch gradient descent),
``mlp`` (one ReLU hidden layer, sigmoid output, full-batch Adam) and
``forest`` (scikit-learn CART forest, exported to plain arrays so models can
be stored as JSON and evaluated without pickles).

Features are one-hot month/day-of-week/hour columns plus the target's own
1-hour and 1-week lag flag.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientHistoryError, SchemaError
from .ingest import WEEK_HOURS, HourlyDataset
from .metrics import auc, log_loss

log = logging.getLogger(__name__)

FAMILIES = ("logreg", "mlp", "forest")
MODEL_FORMAT_VERSION = 1

TIME_SCHEMA = (
    [f"month={m}" for m in range(1, 13)]
    + [f"dow={d}" for d in range(7)]
    + [f"hour={h}" for h in range(24)]
)

DEFAULT_GRIDS = {
    "logreg": [{"l2": 1e-4}],
    "mlp": [{"hidden": h, "lr": lr} for h in (8, 16, 32) for lr in (0.01, 0.001)],
    "forest": [{"trees": t, "depth": d} for t in (50, 100) for d in (6, 12)],
}
MAX_EPOCHS = {"logreg": 500, "mlp": 200}


def _capacity(family: str, point: dict):
    if family == "mlp":
        return (point["hidden"],)
    if family == "forest":
        return (point["trees"], point["depth"])
    return (-point.get("l2", 1e-4),)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    schema: tuple[str, ...]

    def __len__(self):
        return len(self.values)

    def rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[idx], self.schema)


def feature_schema(target: str) -> tuple[str, ...]:
    return tuple(TIME_SCHEMA) + (f"{target}:lag1", f"{target}:lag{WEEK_HOURS}")


def build_features(dataset: HourlyDataset, target: str) -> FeatureMatrix:
    """Feature rows for every hour of ``dataset`` predicting ``target``."""
    n = len(dataset)
    X = np.zeros((n, len(TIME_SCHEMA) + 2))
    rows = np.arange(n)
    X[rows, dataset.month - 1] = 1
    X[rows, 12 + dataset.day_of_week] = 1
    X[rows, 19 + dataset.hour_of_day] = 1
    X[:, -2] = dataset.lag(target, 1)
    X[:, -1] = dataset.lag(target, WEEK_HOURS)
    return FeatureMatrix(X, feature_schema(target))


@dataclass
class TrainedModel:
    family: str
    params: dict
    hyperparams: dict
    feature_schema: tuple[str, ...]
    seed: int = 0
    trained_through: int | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "degenerate": self.degenerate,
            "hyperparams": self.hyperparams,
            "feature_schema": list(self.feature_schema),
            "seed": self.seed,
            "trained_through": self.trained_through,
            "params": _jsonable(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        if data.get("format_version") != MODEL_FORMAT_VERSION:
            raise SchemaError(f"unsupported model format {data.get('format_version')!r}")
        return cls(
            family=data["family"],
            params=_arrays(data["params"]),
            hyperparams=data["hyperparams"],
            feature_schema=tuple(data["feature_schema"]),
            seed=data["seed"],
            trained_through=data["trained_through"],
            degenerate=data["degenerate"],
        )


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _arrays(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.asarray(obj["__array__"], dtype=obj["dtype"])
        return {k: _arrays(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_arrays(v) for v in obj]
    return obj


def save_model(model: TrainedModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True))


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"model file not found: {path}")
    return TrainedModel.from_dict(json.loads(path.read_text()))


def _dedup(X: np.ndarray, y: np.ndarray):
    """Collapse identical (features, target) rows into weighted rows."""
    joined = np.column_stack([X, y])
    if joined.shape[1] <= 62 and ((joined == 0) | (joined == 1)).all():
        # binary rows: pack into integer keys, far cheaper than a row-wise sort
        keys = joined.astype(np.int64) @ (np.int64(1) << np.arange(joined.shape[1], dtype=np.int64))
        _, first, counts = np.unique(keys, return_index=True, return_counts=True)
        return X[first], y[first], counts.astype(float)
    uniq, counts = np.unique(joined, axis=0, return_counts=True)
    return uniq[:, :-1], uniq[:, -1], counts.astype(float)


# -- logistic regression ---------------------------------------------------

def _fit_logreg(X, y, w, l2=1e-4, max_epochs=500, tol=1e-6):
    Xa = np.column_stack([X, np.ones(len(X))])
    sw = w / w.sum()
    # Lipschitz constant of the weighted mean log-loss gradient
    L = np.linalg.norm(Xa * np.sqrt(sw)[:, None], 2) ** 2 / 4.0 + l2
    step = 1.0 / L
    theta = np.zeros(Xa.shape[1])
    reg = np.full(Xa.shape[1], l2)
    reg[-1] = 0.0
    for _ in range(max_epochs):
        p = _sigmoid(Xa @ theta)
        grad = Xa.T @ (sw * (p - y)) + reg * theta
        if np.linalg.norm(grad) < tol:
            break
        theta -= step * grad
    return {"coef": theta[:-1], "intercept": float(theta[-1])}


def _predict_logreg(params, X):
    return _sigmoid(X @ params["coef"] + params["intercept"])


# -- one-hidden-layer network ----------------------------------------------

def _mlp_forward(params, X):
    z1 = X @ params["W1"] + params["b1"]
    a1 = np.maximum(z1, 0.0)
    return z1, a1, _sigmoid(a1 @ params["w2"] + params["b2"])


def _fit_mlp(X, y, w, hidden=16, lr=0.01, epochs=200, seed=0,
             X_val=None, y_val=None, w_val=None, patience=20):
    """Full-batch Adam; one epoch is one step over all (weighted) rows.

    With a validation set, stops when validation log-loss has not improved
    for ``patience`` epochs and returns the best weights plus their epoch.
    """
    rng = np.random.default_rng(seed)
    d = X.shape[1]
    params = {
        "W1": rng.normal(0.0, np.sqrt(2.0 / d), size=(d, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, np.sqrt(1.0 / hidden), size=hidden),
        "b2": np.zeros(1),
    }
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    sw = w / w.sum()
    best = (np.inf, 0, {k: p.copy() for k, p in params.items()})
    for t in range(1, epochs + 1):
        z1, a1, p = _mlp_forward(params, X)
        g = sw * (p - y)
        ga1 = np.outer(g, params["w2"]) * (z1 > 0)
        grads = {"W1": X.T @ ga1, "b1": ga1.sum(axis=0), "w2": a1.T @ g, "b2": np.array([g.sum()])}
        for k in params:
            m[k] = b1 * m[k] + (1 - b1) * grads[k]
            v[k] = b2 * v[k] + (1 - b2) * grads[k] ** 2
            mhat = m[k] / (1 - b1**t)
            vhat = v[k] / (1 - b2**t)
            params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + eps)
        if X_val is not None:
            loss = log_loss(_mlp_forward(params, X_val)[2], y_val, w_val)
            if loss < best[0] - 1e-12:
                best = (loss, t, {k: p.copy() for k, p in params.items()})
            elif t - best[1] >= patience:
                break
    if X_val is None:
        return params, epochs
    return best[2], max(best[1], 1)


def _predict_mlp(params, X):
    return _mlp_forward(params, X)[2]


# -- random forest -----------------------------------------------------------

def _fit_forest(X, y, trees=100, depth=12, seed=0):
    from sklearn.ensemble import RandomForestClassifier

    clf = RandomForestClassifier(
        n_estimators=trees, max_depth=depth, max_features="sqrt", bootstrap=True,
        criterion="gini", random_state=seed, n_jobs=1)
    clf.fit(X, y.astype(int))
    pos = list(clf.classes_).index(1)
    exported = []
    for est in clf.estimators_:
        t = est.tree_
        value = t.value[:, 0, :]
        leaf_p = value[:, pos] / value.sum(axis=1)
        exported.append({
            "left": t.children_left.astype(np.int32),
            "right": t.children_right.astype(np.int32),
            "feature": t.feature.astype(np.int32),
            "threshold": t.threshold.astype(float),
            "p": leaf_p.astype(float),
        })
    return {"trees": exported}


def _predict_forest(params, X):
    total = np.zeros(len(X))
    rows = np.arange(len(X))
    for tree in params["trees"]:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            left = tree["left"][node]
            active = left >= 0
            if not active.any():
                break
            feat = tree["feature"][node[active]]
            go_left = X[rows[active], feat] <= tree["threshold"][node[active]]
            node[active] = np.where(go_left, left[active], tree["right"][node[active]])
        total += tree["p"][node]
    return total / len(params["trees"])


# -- public interface ----------------------------------------------------------

def train(family: str, features: FeatureMatrix, targets, seed: int = 0,
          hyperparams: dict | None = None, weights=None) -> TrainedModel:
    """Fit one binary classifier.

    Single-class targets yield a degenerate constant model that emits the
    class prior instead of raising.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    X = np.asarray(features.values, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(X) != len(y) or len(X) == 0:
        raise ValueError("need a non-empty feature matrix matching the targets")
    hp = dict(DEFAULT_GRIDS[family][0] if family != "mlp" else {"hidden": 16, "lr": 0.01})
    hp.update(hyperparams or {})
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)

    prior = float((w * y).sum() / w.sum())
    if prior in (0.0, 1.0):
        return TrainedModel(family, {"prior": prior}, hp, features.schema, seed, degenerate=True)

    if family == "forest":
        params = _fit_forest(X, y, trees=hp["trees"], depth=hp["depth"], seed=seed)
    else:
        Xu, yu, wu = _dedup(X, y) if weights is None else (X, y, w)
        if family == "logreg":
            params = _fit_logreg(Xu, yu, wu, l2=hp.get("l2", 1e-4), max_epochs=MAX_EPOCHS["logreg"])
        else:
            hp.setdefault("epochs", MAX_EPOCHS["mlp"])
            params, _ = _fit_mlp(Xu, yu, wu, hidden=hp["hidden"], lr=hp["lr"],
                                 epochs=hp["epochs"], seed=seed)
    return TrainedModel(family, params, hp, features.schema, seed)


def predict_proba(model: TrainedModel, features: FeatureMatrix) -> np.ndarray:
    if tuple(features.schema) != tuple(model.feature_schema):
        raise SchemaError("feature schema does not match the trained model")
    X = np.asarray(features.values, dtype=float)
    if model.degenerate:
        return np.full(len(X), model.params["prior"])
    if model.family == "logreg":
        p = _predict_logreg(model.params, X)
    elif model.family == "mlp":
        p = _predict_mlp(model.params, X)
    else:
        p = _predict_forest(model.params, X)
    return np.clip(p, 0.0, 1.0)


def tune(family: str, train_rows: tuple[FeatureMatrix, np.ndarray],
         validation_rows: tuple[FeatureMatrix, np.ndarray],
         grid: list[dict] | None = None, seed: int = 0) -> dict:
    """Grid point with the best validation AUC.

    Ties go to the smallest model. When validation labels hold one class the
    AUC is undefined and validation log-loss ranks the points instead. For
    ``mlp`` the early-stopping epoch is returned alongside the grid values.
    """
    grid = DEFAULT_GRIDS[family] if grid is None else grid
    if not grid:
        raise ValueError("empty hyperparameter grid")
    Xv, yv = validation_rows
    if len(Xv) == 0:
        raise ValueError("empty validation split")
    Xt, yt = train_rows
    ordered = sorted(grid, key=lambda p: _capacity(family, p))
    if len(ordered) == 1 and family != "mlp":
        return dict(ordered[0])

    yt = np.asarray(yt, dtype=float)
    yv = np.asarray(yv, dtype=float)
    best_point, best_score = None, None
    for point in ordered:
        point = dict(point)
        if family == "mlp" and 0 < yt.mean() < 1:
            Xu, yu, wu = _dedup(Xt.values, yt)
            Xvu, yvu, wvu = _dedup(Xv.values, yv)
            params, epoch = _fit_mlp(Xu, yu, wu, hidden=point["hidden"], lr=point["lr"],
                                     epochs=MAX_EPOCHS["mlp"], seed=seed,
                                     X_val=Xvu, y_val=yvu, w_val=wvu)
            point["epochs"] = int(epoch)
            p = _predict_mlp(params, Xv.values)
        else:
            model = train(family, Xt, yt, seed=seed, hyperparams=point)
            p = predict_proba(model, Xv)
        a = auc(p, yv)
        score = (1, a) if a is not None else (0, -log_loss(p, yv))
        if best_score is None or score > best_score:
            best_point, best_score = point, score
    return best_point


@dataclass(frozen=True)
class TrainingSchedule:
    headstart_days: int = 28
    retune_interval_days: int = 120
    training_window_days: int = 180
    validation_fraction: float = 0.2

    def tune_day(self, day: int) -> int:
        """Day of the most recent tuning event at or before ``day``."""
        if day < self.headstart_days:
            raise InsufficientHistoryError(
                f"insufficient history: day {day + 1} needs more than "
                f"{self.headstart_days} days of training data")
        k = (day - self.headstart_days) // self.retune_interval_days
        return self.headstart_days + k * self.retune_interval_days

    def window(self, dataset: HourlyDataset, cursor: int) -> np.ndarray:
        """Non-gap row indices usable for a fit whose first predicted row is ``cursor``."""
        lo = max(0, cursor - self.training_window_days * 24)
        idx = np.arange(lo, cursor)
        return idx[~dataset.gap[idx]]


def target_seed(seed: int, target: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(target.encode())) % 2**32


@dataclass
class RollingFitter:
    """Fits the day-by-day models of one target, caching tuning results."""

    dataset: HourlyDataset
    target: str
    family: str = "mlp"
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)
    seed: int = 0
    grid: list[dict] | None = None

    def __post_init__(self):
        self.features = build_features(self.dataset, self.target)
        self.labels = self.dataset.target(self.target).astype(float)
        self._tuned: dict[int, dict] = {}
        self._seed = target_seed(self.seed, self.target)

    def hyperparams(self, tune_day: int) -> dict:
        if tune_day not in self._tuned:
            cursor = self.dataset.day_slice(tune_day).start
            rows = self.schedule.window(self.dataset, cursor)
            n_val = max(1, int(round(len(rows) * self.schedule.validation_fraction)))
            tr, va = rows[:-n_val], rows[-n_val:]
            y_tr = self.labels[tr]
            if len(tr) == 0 or y_tr.min() == y_tr.max():
                point = dict(sorted(DEFAULT_GRIDS[self.family] if self.grid is None else self.grid,
                                    key=lambda p: _capacity(self.family, p))[0])
            else:
                point = tune(self.family, (self.features.rows(tr), y_tr),
                             (self.features.rows(va), self.labels[va]), self.grid, self._seed)
            log.debug("tuned %s/%s at day %d: %s", self.target, self.family, tune_day, point)
            self._tuned[tune_day] = point
        return self._tuned[tune_day]

    def fit(self, day: int) -> TrainedModel:
        cursor = self.dataset.day_slice(day).start
        hp = self.hyperparams(self.schedule.tune_day(day))
        rows = self.schedule.window(self.dataset, cursor)
        if len(rows) == 0:
            raise InsufficientHistoryError(f"no usable training rows before day {day + 1}")
        model = train(self.family, self.features.rows(rows), self.labels[rows],
                      seed=self._seed, hyperparams=hp)
        model.trained_through = int(self.dataset.hours[cursor - 1])
        return model

    def predict(self, model: TrainedModel, day: int) -> np.ndarray:
        return predict_proba(model, self.features.rows(self.dataset.day_slice(day)))

    def fit_predict(self, day: int) -> np.ndarray:
        return self.predict(self.fit(day), day)


def rolling_fit_predict(dataset: HourlyDataset, target: str, family: str = "mlp",
                        schedule: TrainingSchedule | None = None, seed: int = 0,
                        days=None, grid: list[dict] | None = None) -> dict[int, np.ndarray]:
    """Per-day 24-hour probability vectors for every day after the headstart."""
    schedule = schedule or TrainingSchedule()
    n_days = len(dataset.day_starts)
    if n_days <= schedule.headstart_days:
        raise InsufficientHistoryError(
            f"dataset has {n_days} full days; need more than {schedule.headstart_days}")
    if days is None:
        days = range(schedule.headstart_days, n_days)
    fitter = RollingFitter(dataset, target, family, schedule, seed, grid)
    return {int(d): fitter.fit_predict(int(d)) for d in days}

"""Augmented naive Bayes classifiers learned as selectively conditioned forests.

The features are the target set and the class is the single condition
variable, so each feature may take the class as a parent (``k = 1``) and at
most one other feature. Variants differ only in constraints:

========  ======================  ==================
variant   class parent            feature structure
========  ======================  ==================
nb        required                none
tan       required                single tree
fan       required                forest
stan      optional (penalised)    single tree
sfan      optional (penalised)    forest
========  ======================  ==================
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bma import BmaPredictor
from .data import CategoricalDataset, DataError, Table, kfold_split, synth_weak_features
from .discretize import mdlp_cut_points
from .scf import ParentSet, ScfStructure, learn_cmap_scf, score_parent_sets
from .scoring import (
    CLASSIFIER_ESS,
    LocalScorer,
    ScoreConfig,
    SufficientStats,
    config_index,
    count_stats,
    posterior_mean_cpt,
)

VARIANTS = ("nb", "tan", "fan", "stan", "sfan")


def _variant_setup(variant: str, alpha: float):
    """(alpha, structure) for each variant; nb is handled separately."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    return {
        "nb": (math.inf, "none"),
        "tan": (math.inf, "tree"),
        "fan": (math.inf, "forest"),
        "stan": (alpha, "tree"),
        "sfan": (alpha, "forest"),
    }[variant]


@dataclass
class ClassifierModel:
    """A learned classifier over the columns of its training dataset.

    ``parents[i]`` are the parent columns of feature column ``features[i]``
    and ``counts[i]`` the matching count table.
    """

    names: tuple
    cardinalities: tuple
    class_index: int
    variant: str
    alpha: float
    ess: float
    features: tuple
    parents: tuple
    counts: tuple
    class_counts: np.ndarray
    train_score: float
    categories: tuple | None = None
    _cpts: list = field(default=None, repr=False, compare=False)

    @property
    def n_classes(self) -> int:
        return self.cardinalities[self.class_index]

    def class_log_prior(self) -> np.ndarray:
        r = self.n_classes
        num = np.asarray(self.class_counts, dtype=float) + self.ess / r
        return np.log(num / num.sum())

    def log_cpts(self):
        if self._cpts is None:
            self._cpts = [np.log(posterior_mean_cpt(SufficientStats(np.asarray(c)), self.ess))
                          for c in self.counts]
        return self._cpts

    def class_parent_count(self) -> int:
        return sum(self.class_index in pa for pa in self.parents)

    def intra_edges(self) -> list:
        """(parent feature, child feature) column pairs."""
        return [(p, f) for f, pa in zip(self.features, self.parents)
                for p in pa if p != self.class_index]


def learn_classifier(train: CategoricalDataset, class_index: int, variant: str = "sfan",
                     alpha: float = 0.0, config: ScoreConfig | None = None,
                     scorer: LocalScorer | None = None) -> ClassifierModel:
    """Learn the MAP structure of one variant and its posterior counts.

    ``alpha`` is the exclusion penalty for ``stan`` and ``sfan``; the other
    variants force the class parent.
    """
    ess = (config or ScoreConfig(ess=CLASSIFIER_ESS)).ess
    class_index = int(class_index)
    if not 0 <= class_index < train.n_vars:
        raise ValueError("class index out of range")
    if train.cardinalities[class_index] < 2:
        raise ValueError("class variable needs at least 2 categories")
    a, structure = _variant_setup(variant, alpha)
    features = tuple(i for i in range(train.n_vars) if i != class_index)
    cfg = ScoreConfig(ess=ess, alpha=a, k=1)
    if variant == "nb":
        parents = tuple(ParentSet(None, (class_index,)) for _ in features)
        score = score_parent_sets(train, features, (class_index,), parents, cfg)
        g = ScfStructure(features, (class_index,), parents, (), score)
    else:
        g = learn_cmap_scf(train, features, (class_index,), cfg, structure, scorer=scorer)
    parent_cols = tuple(ps.columns for ps in g.parents)
    counts = tuple(count_stats(train, f, pa).counts for f, pa in zip(features, parent_cols))
    class_counts = count_stats(train, class_index, ()).counts[0]
    return ClassifierModel(
        names=train.names, cardinalities=train.cardinalities, class_index=class_index,
        variant=variant, alpha=float(a), ess=float(ess), features=features,
        parents=parent_cols, counts=counts, class_counts=class_counts,
        train_score=float(g.score), categories=train.categories,
    )


def _check_rows(model, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows[None]
    if rows.shape[1] != len(model.names):
        raise DataError(f"rows have {rows.shape[1]} columns, expected {len(model.names)}")
    cards = np.asarray(model.cardinalities)
    for j in model.features:
        col = rows[:, j]
        if (col < 0).any() or (col >= cards[j]).any():
            raise DataError(f"column {model.names[j]!r} has a category outside the schema")
    return rows


def predict_log_proba(model: ClassifierModel, rows) -> np.ndarray:
    """Normalised log class posteriors; the class column of ``rows`` is ignored."""
    rows = _check_rows(model, rows)
    r = model.n_classes
    out = np.tile(model.class_log_prior(), (rows.shape[0], 1))
    cpts = model.log_cpts()
    clamped = rows.copy()
    for y in range(r):
        clamped[:, model.class_index] = y
        for f, pa, logp in zip(model.features, model.parents, cpts):
            out[:, y] += logp[config_index(clamped, model.cardinalities, pa), clamped[:, f]]
    return out - logsumexp(out, axis=1, keepdims=True)


def predict(model: ClassifierModel, rows) -> tuple[np.ndarray, np.ndarray]:
    """Class distribution per row and the argmax (lowest index on ties)."""
    proba = np.exp(predict_log_proba(model, rows))
    return proba, np.argmax(proba, axis=1)


@dataclass
class BmaClassifier:
    """Class posteriors averaged over every SFAN structure."""

    train: CategoricalDataset
    class_index: int
    alpha: float = 0.0
    ess: float = CLASSIFIER_ESS

    def __post_init__(self):
        if self.train.cardinalities[self.class_index] < 2:
            raise ValueError("class variable needs at least 2 categories")
        features = [i for i in range(self.train.n_vars) if i != self.class_index]
        self.config = ScoreConfig(ess=self.ess, alpha=self.alpha, k=1)
        self._predictor = BmaPredictor(self.train, features, (self.class_index,), self.config)
        counts = count_stats(self.train, self.class_index, ()).counts[0].astype(float)
        counts += self.ess / len(counts)
        self.class_log_prior = np.log(counts / counts.sum())
        self.features = tuple(features)

    def predict_log_proba(self, rows):
        """Returns log posteriors and a per-row flag set where MAP prediction was used."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim == 1:
            rows = rows[None]
        r = len(self.class_log_prior)
        out = np.empty((rows.shape[0], r))
        clamped = rows.copy()
        for y in range(r):
            clamped[:, self.class_index] = y
            out[:, y] = self.class_log_prior[y] + self._predictor.log_predictive_rows(clamped)
        fallback = ~np.isfinite(out).all(axis=1)
        if fallback.any():
            warnings.warn("model averaging failed for some rows; using the MAP structure",
                          RuntimeWarning, stacklevel=2)
            model = learn_classifier(self.train, self.class_index, "sfan", self.alpha,
                                     self.config)
            out[fallback] = predict_log_proba(model, rows[fallback])
        out = out - logsumexp(out, axis=1, keepdims=True)
        return out, fallback


def bma_predict(train: CategoricalDataset, class_index: int, rows, alpha: float = 0.0,
                config: ScoreConfig | None = None):
    """Model-averaged class distribution for each row and the fallback flags."""
    ess = (config or ScoreConfig(ess=CLASSIFIER_ESS)).ess
    logp, fallback = BmaClassifier(train, class_index, alpha, ess).predict_log_proba(rows)
    return np.exp(logp), fallback


# --- evaluation ---------------------------------------------------------------


@dataclass
class AccuracyReport:
    """Cross-validated accuracy; degenerate folds are listed and left out of the mean."""

    variant: str
    alpha: float
    fold_accuracies: list
    confusion: np.ndarray
    degenerate_folds: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies)) if self.fold_accuracies else math.nan

    @property
    def std(self) -> float:
        if len(self.fold_accuracies) < 2:
            return 0.0
        return float(np.std(self.fold_accuracies, ddof=1))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean": self.mean,
            "std": self.std,
            "confusion": np.asarray(self.confusion).tolist(),
            "degenerate_folds": list(self.degenerate_folds),
        }


def _fold_datasets(data, class_index, train_idx, test_idx):
    if isinstance(data, CategoricalDataset):
        return data.take(train_idx), data.take(test_idx)
    labels = data.columns[class_index].values
    tr = data.take(train_idx)
    cuts = {c.name: mdlp_cut_points(c.values, labels[train_idx])
            for c in tr.columns if c.continuous}
    return tr.to_dataset(cuts), data.take(test_idx).to_dataset(cuts)


def _fold_predictions(data, class_index, variant, alpha, config, averaging, tr_idx, te_idx):
    train, test = _fold_datasets(data, class_index, tr_idx, te_idx)
    if len(np.unique(train.data[:, class_index])) < 2:
        return None
    if averaging == "bma":
        proba, _ = bma_predict(train, class_index, test.data, alpha, config)
        pred = np.argmax(proba, axis=1)
    else:
        model = learn_classifier(train, class_index, variant, alpha, config)
        _, pred = predict(model, test.data)
    return test.data[:, class_index], pred


def crossval_accuracy(data, class_col, variant: str = "sfan", alpha: float = 0.0,
                      n_folds: int = 10, seed: int = 0, config: ScoreConfig | None = None,
                      averaging: str = "map", n_jobs: int = 1) -> AccuracyReport:
    """k-fold accuracy; continuous columns are discretized on each training fold.

    ``data`` is a :class:`CategoricalDataset` or a :class:`Table` (missing
    values already dropped). ``averaging="bma"`` averages over SFAN
    structures instead of using the MAP one. Folds run in ``n_jobs``
    workers; the result does not depend on the worker count.
    """
    config = config or ScoreConfig(ess=CLASSIFIER_ESS)
    _variant_setup(variant, alpha)
    if averaging not in ("map", "bma"):
        raise ValueError("averaging must be 'map' or 'bma'")
    class_index = data.names.index(class_col) if isinstance(class_col, str) else int(class_col)
    if isinstance(data, Table):
        if data.columns[class_index].continuous:
            raise DataError("class column must be categorical")
        n_classes = len(data.columns[class_index].categories)
    else:
        n_classes = data.cardinalities[class_index]
    split = kfold_split(data.n_rows, n_folds, seed)
    results = _run(n_jobs, _fold_predictions,
                   [(data, class_index, variant, alpha, config, averaging, tr, te)
                    for tr, te in split])
    accs, degenerate = [], []
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for fold, res in enumerate(results):
        if res is None:
            degenerate.append(fold)
            continue
        truth, pred = res
        np.add.at(confusion, (truth, pred), 1)
        accs.append(float(np.mean(pred == truth)))
    return AccuracyReport(variant, float(alpha), accs, confusion, degenerate)


def _run(n_jobs, fn, arg_list):
    if n_jobs == 1 or len(arg_list) < 2:
        return [fn(*a) for a in arg_list]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*a) for a in arg_list)


@dataclass(frozen=True)
class SweepPoint:
    alpha: float
    mean: float
    std: float
    sem: float
    n: int


def _sweep_repeat(rep, alphas, n_train, n_test, n_relevant, n_noise, p, seed, config, variant):
    train = synth_weak_features(n_relevant, n_noise, p, n_train, seed=(seed, rep, 0))
    test = synth_weak_features(n_relevant, n_noise, p, n_test, seed=(seed, rep, 1))
    scorer = LocalScorer(train, config.ess)
    acc = np.empty(len(alphas))
    for a, alpha in enumerate(alphas):
        model = learn_classifier(train, 0, variant, alpha, config, scorer=scorer)
        _, pred = predict(model, test.data)
        acc[a] = np.mean(pred == test.data[:, 0])
    return acc


def penalty_sweep(alphas, n_repeats: int = 100, n_train: int = 100, n_test: int = 100,
                  n_relevant: int = 10, n_noise: int = 20, p: float = 0.6, seed: int = 0,
                  config: ScoreConfig | None = None, variant: str = "sfan",
                  n_jobs: int = 1) -> list:
    """Accuracy of the penalised selective classifier across exclusion penalties.

    Each repeat draws fresh train and test sets from the weak-feature
    generator and evaluates every penalty on that same pair.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("alpha grid is empty")
    if sorted(alphas) != alphas:
        raise ValueError("alpha grid must be sorted")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    config = config or ScoreConfig(ess=CLASSIFIER_ESS)
    acc = np.vstack(_run(n_jobs, _sweep_repeat,
                         [(rep, alphas, n_train, n_test, n_relevant, n_noise, p, seed,
                           config, variant) for rep in range(n_repeats)]))
    out = []
    for a, alpha in enumerate(alphas):
        col = acc[:, a]
        sd = float(np.std(col, ddof=1)) if n_repeats > 1 else 0.0
        out.append(SweepPoint(alpha, float(col.mean()), sd, sd / math.sqrt(n_repeats), n_repeats))
    return out


# --- estimator --------------------------------------------------------------------


class SCFClassifier(ClassifierMixin, BaseEstimator):
    """Augmented naive Bayes classifier over integer-coded categorical features.

    Parameters
    ----------
    variant : {"nb", "tan", "fan", "stan", "sfan"}
    alpha : float
        Exclusion penalty for the selective variants.
    ess : float
        BDeu equivalent sample size.
    averaging : {"map", "bma"}
        Predict with the MAP structure or average over all SFAN structures
        (``bma`` ignores ``variant``).
    cardinalities : sequence of int, optional
        Categories per feature; inferred from the training data otherwise.
    """

    def __init__(self, variant="sfan", alpha=0.0, ess=CLASSIFIER_ESS, averaging="map",
                 cardinalities=None):
        self.variant = variant
        self.alpha = alpha
        self.ess = ess
        self.averaging = averaging
        self.cardinalities = cardinalities

    def _rows(self, X, y_codes=None):
        if np.any(X < 0):
            raise ValueError("features must be non-negative category indices")
        y_codes = np.zeros(X.shape[0], dtype=np.int64) if y_codes is None else y_codes
        return np.column_stack([X, y_codes])

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None)
        X = _as_codes(X)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        y_codes = np.searchsorted(self.classes_, y)
        cards = self.cardinalities
        if cards is None:
            cards = X.max(axis=0) + 1 if X.shape[0] else np.ones(X.shape[1], int)
        cards = [int(c) for c in cards]
        if len(cards) != X.shape[1]:
            raise ValueError("cardinalities do not match the number of features")
        self.n_features_in_ = X.shape[1]
        names = [f"x{i}" for i in range(X.shape[1])] + ["class"]
        ds = CategoricalDataset(names, cards + [len(self.classes_)], self._rows(X, y_codes))
        config = ScoreConfig(ess=self.ess)
        if self.averaging == "bma":
            self.model_ = BmaClassifier(ds, ds.n_vars - 1, self.alpha, self.ess)
        elif self.averaging == "map":
            self.model_ = learn_classifier(ds, ds.n_vars - 1, self.variant, self.alpha, config)
        else:
            raise ValueError("averaging must be 'map' or 'bma'")
        return self

    def predict_log_proba(self, X):
        check_is_fitted(self, "model_")
        X = _as_codes(check_array(X, dtype=None))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        rows = self._rows(X)
        if isinstance(self.model_, BmaClassifier):
            return self.model_.predict_log_proba(rows)[0]
        return predict_log_proba(self.model_, rows)

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_log_proba(X), axis=1)]


def _as_codes(X) -> np.ndarray:
    X = np.asarray(X)
    if X.dtype.kind == "f":
        if not np.all(np.isfinite(X)) or not np.all(X == np.round(X)):
            raise ValueError("features must be integer category indices")
    elif X.dtype.kind not in "iub":
        raise ValueError("features must be integer category indices")
    return X.astype(np.int64)

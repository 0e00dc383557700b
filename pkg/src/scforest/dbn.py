"""Two-slice dynamic Bayesian networks with SCF transition structures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bma import BmaPredictor, build_weight_matrix, forest_partition
from .data import CategoricalDataset, DataError, SequenceDataset, to_transitions
from .scf import learn_cmap_scf, transition_dataset
from .scoring import (
    DBN_ESS,
    ScoreConfig,
    SufficientStats,
    config_index,
    count_stats,
    posterior_mean_cpt,
)

MODEL_CLASSES = ("none", "intra", "inter", "scf", "bma-scf")


def _class_setup(kind: str, k: int):
    """(k, structure) used to learn the transition structure of each model class."""
    if kind == "none":
        return 0, "none"
    if kind == "intra":
        return 0, "forest"
    if kind == "inter":
        return k, "none"
    if kind in ("scf", "bma-scf"):
        return k, "forest"
    raise ValueError(f"unknown model class {kind!r}; expected one of {MODEL_CLASSES}")


def class_label(kind: str, k: int) -> str:
    if kind in ("none", "intra"):
        return kind
    return f"{kind}({k})"


@dataclass
class DbnModel:
    """Learned two-slice model.

    ``trans_parents[i]`` lists parents of ``x_t[i]`` as columns of the joined
    transition row (``0..m-1`` previous slice, ``m..2m-1`` current slice);
    ``init_parents`` use first-slice column ids. Count arrays are indexed
    ``[parent configuration, value]`` with parents in the listed order.
    For ``bma-scf`` the MAP SCF is stored for display and the training
    transitions are kept for averaging.
    """

    names: tuple
    cardinalities: tuple
    kind: str
    k: int
    ess: float
    init_parents: tuple
    init_counts: tuple
    trans_parents: tuple
    trans_counts: tuple
    train_score: float
    categories: tuple | None = None
    transitions: np.ndarray | None = None
    _predictor: object = field(default=None, repr=False, compare=False)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def label(self) -> str:
        return class_label(self.kind, self.k)

    def config(self) -> ScoreConfig:
        return ScoreConfig(ess=self.ess, k=self.k)

    def bma_predictor(self) -> BmaPredictor:
        if self._predictor is None:
            m = self.n_vars
            joint = CategoricalDataset(
                [f"{n}@t-1" for n in self.names] + list(self.names),
                self.cardinalities * 2, self.transitions,
            )
            self._predictor = BmaPredictor(joint, range(m, 2 * m), range(m), self.config())
        return self._predictor


@dataclass(frozen=True)
class EvalReport:
    """Held-out log probability of each transition's next slice given the previous one."""

    label: str
    total: float
    count: int
    per_variable: dict | None = None

    @property
    def average(self) -> float:
        return self.total / self.count


def learn_dbn(train: SequenceDataset, kind: str = "scf", k: int = 1,
              config: ScoreConfig | None = None) -> DbnModel:
    """Learn the initial and transition structures for one model class.

    ``none`` leaves every variable parentless, ``intra`` learns a same-slice
    forest only, ``inter`` allows up to ``k`` previous-slice parents without
    same-slice edges, ``scf`` combines both, and ``bma-scf`` averages over
    all ``scf`` structures at prediction time.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    kk, structure = _class_setup(kind, k)
    config = ScoreConfig(ess=(config or ScoreConfig()).ess, k=kk)
    prev, nxt = to_transitions(train)
    m = train.n_vars
    joint = transition_dataset(prev, nxt)

    if structure == "none" and kk == 0:
        g_next = learn_cmap_scf(joint, range(m, 2 * m), (), config, "none")
    else:
        g_next = learn_cmap_scf(joint, range(m, 2 * m), range(m), config, structure)
    trans_parents = tuple(ps.columns for ps in g_next.parents)
    trans_counts = tuple(count_stats(joint, m + i, pa).counts
                         for i, pa in enumerate(trans_parents))
    train_score = g_next.score
    transitions = None
    if kind == "bma-scf":
        transitions = joint.data
        w = build_weight_matrix(joint, range(m, 2 * m), range(m), config)
        train_score = forest_partition(w).log_partition

    first = CategoricalDataset(train.names, train.cardinalities,
                               np.vstack([s[:1] for s in train.sequences]))
    init_structure = "none" if kind == "none" else "forest"
    g0 = learn_cmap_scf(first, range(m), (), ScoreConfig(ess=config.ess, k=0), init_structure)
    init_parents = tuple(ps.columns for ps in g0.parents)
    init_counts = tuple(count_stats(first, i, pa).counts for i, pa in enumerate(init_parents))

    return DbnModel(
        names=train.names, cardinalities=train.cardinalities, kind=kind, k=int(k),
        ess=float(config.ess), init_parents=init_parents, init_counts=init_counts,
        trans_parents=trans_parents, trans_counts=trans_counts,
        train_score=float(train_score), categories=train.categories,
        transitions=transitions,
    )


def _check_schema(model: DbnModel, test: SequenceDataset):
    if tuple(test.names) != tuple(model.names) or \
            tuple(test.cardinalities) != tuple(model.cardinalities):
        raise DataError("test sequences do not match the model schema")


def eval_log_predictive(model: DbnModel, test: SequenceDataset,
                        mode: str = "posterior-mean") -> EvalReport:
    """Sum and average of ``log P(x_t | x_{t-1})`` over test transitions.

    Parameters
    ----------
    mode : {"posterior-mean", "sequential"}
        ``"posterior-mean"`` scores each transition under the fixed
        posterior-mean CPTs of the training data. ``"sequential"`` adds each
        test transition to the counts after scoring it, so the total equals
        the batch posterior predictive of the whole test set. ``bma-scf``
        models always score each transition against the training data alone.
    """
    if mode not in ("posterior-mean", "sequential"):
        raise ValueError(f"unknown mode {mode!r}")
    _check_schema(model, test)
    prev, nxt = to_transitions(test)
    rows = np.hstack([prev.data, nxt.data])
    m = model.n_vars
    if model.kind == "bma-scf":
        scores = model.bma_predictor().log_predictive_rows(rows)
        return EvalReport(model.label, float(np.sum(scores)), len(rows))

    cards2 = model.cardinalities * 2
    per_var = {}
    for i, pa in enumerate(model.trans_parents):
        child = m + i
        counts = np.asarray(model.trans_counts[i])
        cfg = config_index(rows, cards2, pa)
        x = rows[:, child]
        if mode == "posterior-mean":
            logp = np.log(posterior_mean_cpt(SufficientStats(counts), model.ess))
            per_var[model.names[i]] = float(np.sum(logp[cfg, x]))
        else:
            q, r = counts.shape
            a = model.ess / (q * r)
            n = counts.astype(float).copy()
            nj = n.sum(axis=1)
            total = 0.0
            for c, v in zip(cfg, x):
                total += math.log((n[c, v] + a) / (nj[c] + r * a))
                n[c, v] += 1
                nj[c] += 1
            per_var[model.names[i]] = total
    total = float(sum(per_var.values()))
    return EvalReport(model.label, total, len(rows), per_var)


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    train_score: float
    report: EvalReport


def compare_model_classes(train: SequenceDataset, test: SequenceDataset, ks=(1,),
                          config: ScoreConfig | None = None, bma: bool = True) -> list:
    """Learn and evaluate every model class; rows ordered as in the model class list."""
    specs = [("none", 0), ("intra", 0)]
    specs += [("inter", k) for k in ks]
    specs += [("scf", k) for k in ks]
    if bma:
        specs += [("bma-scf", k) for k in ks]
    rows = []
    for kind, k in specs:
        model = learn_dbn(train, kind, k, config)
        rows.append(ComparisonRow(model.label, model.train_score,
                                  eval_log_predictive(model, test)))
    return rows


def _as_sequences(X, cardinalities=None) -> SequenceDataset:
    if isinstance(X, SequenceDataset):
        return X
    seqs = [np.asarray(s, dtype=np.int64) for s in X]
    if not seqs:
        raise DataError("no sequences")
    m = seqs[0].shape[1]
    if cardinalities is None:
        cardinalities = np.max(np.vstack(seqs), axis=0) + 1
    return SequenceDataset([f"x{i}" for i in range(m)], cardinalities, seqs)


class DynamicSCFNetwork(BaseEstimator):
    """Estimator wrapper around :func:`learn_dbn` and :func:`eval_log_predictive`.

    Parameters
    ----------
    model_class : {"none", "intra", "inter", "scf", "bma-scf"}
    k : int
        Maximum previous-slice parents per variable.
    ess : float
        BDeu equivalent sample size.
    cardinalities : sequence of int, optional
        Needed when ``X`` is a list of arrays whose training sequences may
        not show every category.
    """

    def __init__(self, model_class="scf", k=1, ess=DBN_ESS, cardinalities=None):
        self.model_class = model_class
        self.k = k
        self.ess = ess
        self.cardinalities = cardinalities

    def fit(self, X, y=None):
        seqs = _as_sequences(X, self.cardinalities)
        self.model_ = learn_dbn(seqs, self.model_class, self.k, ScoreConfig(ess=self.ess))
        self.n_features_in_ = seqs.n_vars
        return self

    def score(self, X, y=None) -> float:
        """Average held-out log probability per transition."""
        check_is_fitted(self, "model_")
        seqs = _as_sequences(X, self.model_.cardinalities)
        return eval_log_predictive(self.model_, seqs).average

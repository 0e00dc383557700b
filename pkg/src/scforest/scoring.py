"""Sufficient statistics, BDeu local scores and structure priors."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import CategoricalDataset

DBN_ESS = 20.0
CLASSIFIER_ESS = 10.0


@dataclass(frozen=True)
class ScoreConfig:
    """Scoring hyperparameters.

    Parameters
    ----------
    ess : float
        BDeu equivalent sample size.
    alpha : float
        Log-prior penalty for a parent set that leaves out the condition
        set; ``math.inf`` forbids such sets.
    k : int
        Maximum number of condition-set parents per child.
    """

    ess: float = DBN_ESS
    alpha: float = 0.0
    k: int = 1
    structure_prior: str = "uniform"

    def __post_init__(self):
        if not self.ess > 0:
            raise ValueError("ess must be > 0")
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("k must be a non-negative integer")
        if self.structure_prior != "uniform":
            raise ValueError("only the uniform structure prior is supported")


@dataclass(frozen=True)
class SufficientStats:
    """Counts ``N[j, k]`` of child value ``k`` under parent configuration ``j``."""

    counts: np.ndarray

    @property
    def q(self) -> int:
        return self.counts.shape[0]

    @property
    def r(self) -> int:
        return self.counts.shape[1]

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        if self.counts.shape != other.counts.shape:
            raise ValueError(
                f"statistics shapes differ: {self.counts.shape} vs {other.counts.shape}"
            )
        return SufficientStats(self.counts + other.counts)


def config_index(data: np.ndarray, cards, parents) -> np.ndarray:
    """Mixed-radix parent configuration of every row; first parent most significant."""
    parents = list(parents)
    if not parents:
        return np.zeros(data.shape[0], dtype=np.int64)
    dims = tuple(int(cards[p]) for p in parents)
    return np.ravel_multi_index(tuple(data[:, parents].T), dims).astype(np.int64)


def _tally(data: np.ndarray, cards, child: int, parents) -> np.ndarray:
    q = int(np.prod([cards[p] for p in parents])) if parents else 1
    r = int(cards[child])
    idx = config_index(data, cards, parents) * r + data[:, child]
    return np.bincount(idx, minlength=q * r).reshape(q, r)


def _check_family(n_vars, child, parents):
    parents = list(parents)
    if not 0 <= child < n_vars or any(not 0 <= p < n_vars for p in parents):
        raise ValueError("variable id out of range")
    if len(set(parents)) != len(parents):
        raise ValueError(f"duplicate parent ids in {parents}")
    if child in parents:
        raise ValueError(f"variable {child} listed as its own parent")
    return parents


def count_stats(dataset: CategoricalDataset, child: int, parents=()) -> SufficientStats:
    """Tally child values per parent configuration."""
    parents = _check_family(dataset.n_vars, child, parents)
    return SufficientStats(_tally(dataset.data, dataset.cardinalities, child, parents))


def local_score_bdeu(stats: SufficientStats, ess: float) -> float:
    """BDeu log marginal likelihood of one family."""
    if not ess > 0:
        raise ValueError("ess must be > 0")
    n = stats.counts
    q, r = n.shape
    a_jk = ess / (q * r)
    a_j = ess / q
    nj = n.sum(axis=1)
    score = np.sum(gammaln(a_j) - gammaln(a_j + nj))
    score += np.sum(gammaln(a_jk + n) - gammaln(a_jk))
    return float(score)


def posterior_predictive_score(train: SufficientStats, test: SufficientStats, ess: float) -> float:
    """Log probability of the test rows under the Dirichlet posterior given train."""
    combined = train + test
    return local_score_bdeu(combined, ess) - local_score_bdeu(train, ess)


def posterior_mean_cpt(stats: SufficientStats, ess: float) -> np.ndarray:
    """Posterior-mean conditional probability table with BDeu pseudocounts."""
    q, r = stats.counts.shape
    num = stats.counts + ess / (q * r)
    return num / num.sum(axis=1, keepdims=True)


def structure_log_prior(parent_set, condition_vars, config: ScoreConfig) -> float:
    """Unnormalised log prior of one parent set.

    The uniform base prior contributes 0. A set sharing no variable with
    ``condition_vars`` is penalised by ``config.alpha`` (``-inf`` when alpha
    is infinite); with an empty condition set there is nothing to exclude.
    """
    inter = tuple(parent_set.inter)
    if len(inter) > config.k:
        raise ValueError(f"{len(inter)} condition-set parents exceed k={config.k}")
    intra = parent_set.intra
    if intra is not None and not isinstance(intra, (int, np.integer)):
        raise ValueError("at most one intra-set parent is allowed")
    cond = set(condition_vars)
    if not cond or config.alpha == 0:
        return 0.0
    if cond.isdisjoint(inter):
        return -math.inf if math.isinf(config.alpha) else -float(config.alpha)
    return 0.0


class LocalScorer:
    """Memoised BDeu local scores over one dataset.

    Cache keys are ``(child, sorted parent ids)``; the structure prior is
    added outside the cache so one scorer can serve several penalties.
    """

    def __init__(self, dataset: CategoricalDataset, ess: float):
        if not ess > 0:
            raise ValueError("ess must be > 0")
        self.dataset = dataset
        self.ess = float(ess)
        self._cache: dict = {}
        self._stats: dict = {}
        self._lock = threading.Lock()

    def stats(self, child: int, parents) -> SufficientStats:
        key = (int(child), tuple(sorted(int(p) for p in parents)))
        with self._lock:
            hit = self._stats.get(key)
        if hit is None:
            parents = _check_family(self.dataset.n_vars, key[0], key[1])
            hit = SufficientStats(_tally(self.dataset.data, self.dataset.cardinalities,
                                         key[0], parents))
            with self._lock:
                hit = self._stats.setdefault(key, hit)
        return hit

    def local_score(self, child: int, parents) -> float:
        key = (int(child), tuple(sorted(int(p) for p in parents)))
        with self._lock:
            hit = self._cache.get(key)
        if hit is None:
            value = local_score_bdeu(self.stats(*key), self.ess)
            with self._lock:
                hit = self._cache.setdefault(key, value)
        return hit

    def family_score(self, child: int, parent_set, condition_vars, config: ScoreConfig) -> float:
        prior = structure_log_prior(parent_set, condition_vars, config)
        if prior == -math.inf:
            return -math.inf
        return self.local_score(child, parent_set.columns) + prior

    def __len__(self):
        return len(self._cache)

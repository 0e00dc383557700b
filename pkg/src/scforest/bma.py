"""Bayesian model averaging over selectively conditioned forests.

The sum over all forests of the product of per-child weights is the
determinant of the rooted in-degree Laplacian (directed Matrix Tree
Theorem, with a super-root whose edges carry the root weights). Per-child
weights already sum over that child's condition-set parents, so the
determinant sums over every SCF.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor
from scipy.special import logsumexp

from .scf import ParentSet, _check_sets, inter_subsets, learn_cmap_scf
from .scoring import LocalScorer, ScoreConfig

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-9


class SingularWeightMatrixError(ArithmeticError):
    """The scaled Laplacian is numerically singular."""

    def __init__(self, message, min_pivot=None):
        super().__init__(message)
        self.min_pivot = min_pivot


@dataclass(frozen=True)
class LogWeightMatrix:
    """Log edge weights ``log_w[i, j]`` (``i`` parent of ``j``) and log root weights."""

    log_w: np.ndarray
    log_root: np.ndarray

    def __post_init__(self):
        lw = np.array(self.log_w, dtype=float)
        lr = np.array(self.log_root, dtype=float).ravel()
        n = len(lr)
        if lw.shape != (n, n):
            raise ValueError(f"log_w must be {n}x{n}")
        np.fill_diagonal(lw, -np.inf)
        lw.setflags(write=False)
        lr.setflags(write=False)
        object.__setattr__(self, "log_w", lw)
        object.__setattr__(self, "log_root", lr)

    @property
    def n(self) -> int:
        return len(self.log_root)

    def column_scale(self) -> np.ndarray:
        """Per-child maximum log weight, factored out before exponentiation."""
        if self.n == 0:
            return np.zeros(0)
        return np.maximum(self.log_root, self.log_w.max(axis=0))

    def scaled(self):
        """Linear weights with each column divided by its largest entry."""
        m = self.column_scale()
        if np.isneginf(m).any():
            j = int(np.flatnonzero(np.isneginf(m))[0])
            raise ValueError(f"child {j} has no finite weight")
        return np.exp(self.log_w - m), np.exp(self.log_root - m), m

    def laplacian(self):
        """Scaled reduced Laplacian and the column scales that were removed."""
        w, r, m = self.scaled()
        lap = -w
        np.fill_diagonal(lap, r + w.sum(axis=0))
        return lap, m


@dataclass(frozen=True)
class BmaResult:
    log_partition: float
    method: str
    conditioned: bool = False


def _forest_log_partition_lu(lw: LogWeightMatrix) -> float:
    if lw.n == 0:
        return 0.0
    lap, m = lw.laplacian()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(lap, check_finite=True)
    diag = np.diag(lu)
    min_pivot = float(np.min(np.abs(diag)))
    swaps = int(np.sum(piv != np.arange(len(piv))))
    sign = (-1) ** swaps * np.prod(np.sign(diag))
    if min_pivot < PIVOT_TOL or sign <= 0:
        raise SingularWeightMatrixError(
            f"scaled Laplacian is singular (min |pivot| = {min_pivot:.3g}); "
            "symmetric edge weights may need directing",
            min_pivot=min_pivot,
        )
    return float(np.sum(np.log(np.abs(diag))) + np.sum(m))


def _forest_log_partition_elim(log_w: np.ndarray, log_root: np.ndarray) -> np.ndarray:
    """Batched subtraction-free elimination of rooted Laplacians.

    Eliminating child ``p`` leaves the Laplacian of a smaller graph with
    ``w'[i, j] = w[i, j] + w[i, p] w[p, j] / d_p`` and
    ``r'[j] = r[j] + r[p] w[p, j] / d_p``, where ``d_p`` is ``p``'s total
    in-weight; the determinant is the product of the ``d_p``. Only sums of
    non-negative terms appear, so no cancellation occurs.
    """
    lw = np.array(log_w, dtype=float)
    lr = np.array(log_root, dtype=float)
    batch, n = lr.shape
    idx = np.arange(n)
    lw[:, idx, idx] = -np.inf
    total = np.zeros(batch)
    dead = np.zeros(batch, dtype=bool)
    with np.errstate(invalid="ignore"):
        for p in range(n):
            ld = np.logaddexp(lr[:, p], logsumexp(lw[:, :, p], axis=1))
            zero = np.isneginf(ld)
            dead |= zero
            ld = np.where(zero, 0.0, ld)
            total += ld
            if p == n - 1:
                break
            rest = slice(p + 1, n)
            out_p = lw[:, p, rest] - ld[:, None]            # w[p, j] / d_p
            into_p = lw[:, rest, p]                         # w[i, p]
            lw[:, rest, rest] = np.logaddexp(
                lw[:, rest, rest], into_p[:, :, None] + out_p[:, None, :]
            )
            lr[:, rest] = np.logaddexp(lr[:, rest], lr[:, p][:, None] + out_p)
            lw[:, idx[rest], idx[rest]] = -np.inf
            lw[:, p, :] = -np.inf
            lw[:, :, p] = -np.inf
    return np.where(dead, -np.inf, total)


def forest_partition(lw: LogWeightMatrix, method: str = "elimination") -> BmaResult:
    """Log of the total weight of all rooted spanning forests.

    Parameters
    ----------
    method : {"elimination", "lu"}
        ``"elimination"`` runs the subtraction-free log-domain elimination.
        ``"lu"`` factorises the column-scaled Laplacian with partial pivoting
        and raises :class:`SingularWeightMatrixError` when a pivot falls
        below ``PIVOT_TOL``.
    """
    if method == "lu":
        return BmaResult(_forest_log_partition_lu(lw), "lu")
    if method != "elimination":
        raise ValueError(f"unknown method {method!r}")
    if lw.n == 0:
        return BmaResult(0.0, method)
    val = _forest_log_partition_elim(lw.log_w[None], lw.log_root[None])[0]
    return BmaResult(float(val), method)


def build_weight_matrix(train, targets, condition, config: ScoreConfig, query=None,
                        scorer: LocalScorer | None = None) -> LogWeightMatrix:
    """Per-child weights summed over condition-set parent subsets of size <= k.

    ``log_w[i, j]`` is the log-sum-exp, over subsets, of child ``j``'s local
    score with target ``i`` as its same-set parent plus the log structure
    prior. Scores use ``train`` or, when ``query`` is given, the union of
    train and query rows.
    """
    targets, condition = _check_sets(train, targets, condition)
    data = train if query is None else train.concat_rows(query)
    if scorer is None:
        scorer = LocalScorer(data, config.ess)
    subsets = inter_subsets(condition, config.k)
    n = len(targets)
    log_w = np.full((n, n), -np.inf)
    log_root = np.full(n, -np.inf)
    for j, child in enumerate(targets):
        for i in range(n + 1):
            if i == j:
                continue
            intra = targets[i] if i < n else None
            terms = [scorer.family_score(child, ParentSet(intra, s), condition, config)
                     for s in subsets]
            val = logsumexp(terms) if terms else -np.inf
            if i < n:
                log_w[i, j] = val
            else:
                log_root[j] = val
    return LogWeightMatrix(log_w, log_root)


def _topological_rank(intra_parent) -> np.ndarray:
    """Position of each vertex in a breadth-first order of a forest."""
    n = len(intra_parent)
    children = [[] for _ in range(n)]
    for i, p in enumerate(intra_parent):
        if p >= 0:
            children[p].append(i)
    order = [i for i in range(n) if intra_parent[i] < 0]
    for v in order:
        order.extend(sorted(children[v]))
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    return rank


def resolve_direction_conditioning(lw: LogWeightMatrix, map_structure) -> LogWeightMatrix:
    """Direct near-symmetric edge pairs the way the MAP structure orders them.

    For every pair with ``|log w[i, j] - log w[j, i]| < SYMMETRY_TOL`` the
    edge pointing against the MAP forest's breadth-first order is removed.
    This changes the averaged quantity; it is a fallback for singular
    Laplacians only.
    """
    rank = _topological_rank(map_structure.intra_parent())
    log_w = lw.log_w.copy()
    n = lw.n
    for i in range(n):
        for j in range(i + 1, n):
            a, b = log_w[i, j], log_w[j, i]
            same = (a == b) if np.isinf(a) or np.isinf(b) else abs(a - b) < SYMMETRY_TOL
            if not same or np.isneginf(a):
                continue
            if rank[i] < rank[j]:
                log_w[j, i] = -np.inf
            else:
                log_w[i, j] = -np.inf
    return LogWeightMatrix(log_w, lw.log_root)


def bma_log_predictive(train, query, targets, condition, config: ScoreConfig,
                       method: str = "elimination") -> float:
    """Model-averaged log probability of the query rows given the training rows.

    Computed as the ratio of two forest partitions: with weights scored on
    train plus query, and on train alone. The structure prior's
    normaliser cancels in the ratio. With ``method="lu"`` a singular
    Laplacian is retried after :func:`resolve_direction_conditioning`
    using the MAP structure, with a warning.
    """
    if query.n_rows == 0:
        return 0.0
    w_all = build_weight_matrix(train, targets, condition, config, query=query)
    w_train = build_weight_matrix(train, targets, condition, config)
    try:
        return forest_partition(w_all, method).log_partition - \
            forest_partition(w_train, method).log_partition
    except SingularWeightMatrixError:
        warnings.warn("singular Laplacian; directing symmetric edges by the MAP structure",
                      RuntimeWarning, stacklevel=2)
        g = learn_cmap_scf(train, targets, condition, config)
        a = forest_partition(resolve_direction_conditioning(w_all, g), method)
        b = forest_partition(resolve_direction_conditioning(w_train, g), method)
        return a.log_partition - b.log_partition


class BmaPredictor:
    """Model-averaged predictive probabilities for many independent query rows.

    Training statistics for every family are computed once; each query row
    then only adds its own posterior-predictive term to each family weight.

    Parameters
    ----------
    structure : {"forest", "none"}
        ``"none"`` averages only over condition-set parents.
    """

    def __init__(self, train, targets, condition, config: ScoreConfig,
                 structure: str = "forest", scorer: LocalScorer | None = None):
        if structure not in ("forest", "none"):
            raise ValueError("BMA supports structure 'forest' or 'none'")
        self.targets, self.condition = _check_sets(train, targets, condition)
        self.config = config
        self.structure = structure
        self.cards = train.cardinalities
        scorer = LocalScorer(train, config.ess) if scorer is None else scorer
        subsets = inter_subsets(self.condition, config.k)
        n = len(self.targets)
        self._families = []   # (j, i, child, columns, base, log predictive table)
        for j, child in enumerate(self.targets):
            for i in range(n + 1):
                if i == j or (structure == "none" and i < n):
                    continue
                intra = self.targets[i] if i < n else None
                for s in subsets:
                    ps = ParentSet(intra, s)
                    base = scorer.family_score(child, ps, self.condition, config)
                    if base == -math.inf:
                        continue
                    counts = scorer.stats(child, ps.columns).counts
                    q, r = counts.shape
                    a = config.ess / (q * r)
                    table = np.log(counts + a) - np.log(counts.sum(axis=1, keepdims=True) + r * a)
                    self._families.append((j, i, child, ps.columns, base, table))
        self.train_weights = self._weights(None)
        self.log_partition_train = self._partition(
            self.train_weights.log_w[None], self.train_weights.log_root[None])[0]

    def _weights(self, rows):
        n = len(self.targets)
        batch = 1 if rows is None else rows.shape[0]
        buckets = {}
        for j, i, child, cols, base, table in self._families:
            if rows is None:
                term = np.full(1, base)
            else:
                cfg = np.zeros(batch, dtype=np.int64)
                for c in cols:
                    cfg = cfg * self.cards[c] + rows[:, c]
                term = base + table[cfg, rows[:, child]]
            buckets.setdefault((i, j), []).append(term)
        log_w = np.full((batch, n, n), -np.inf)
        log_root = np.full((batch, n), -np.inf)
        for (i, j), terms in buckets.items():
            val = logsumexp(np.vstack(terms), axis=0)
            if i < n:
                log_w[:, i, j] = val
            else:
                log_root[:, j] = val
        if rows is None:
            return LogWeightMatrix(log_w[0], log_root[0])
        return log_w, log_root

    def _partition(self, log_w, log_root):
        if self.structure == "none":
            return log_root.sum(axis=1)
        if len(self.targets) == 0:
            return np.zeros(log_root.shape[0])
        return _forest_log_partition_elim(log_w, log_root)

    def log_predictive_rows(self, rows, batch_size: int = 512) -> np.ndarray:
        """Log predictive probability of each row, each given the training data only.

        ``rows`` are full rows over the training schema.
        """
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim == 1:
            rows = rows[None]
        out = np.empty(rows.shape[0])
        for start in range(0, rows.shape[0], batch_size):
            chunk = rows[start:start + batch_size]
            log_w, log_root = self._weights(chunk)
            out[start:start + len(chunk)] = self._partition(log_w, log_root) - \
                self.log_partition_train
        return out

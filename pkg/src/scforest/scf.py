"""Exact MAP learning of selectively conditioned forests.

Targets form at most a forest among themselves and each target takes up to
``k`` parents from a disjoint condition set. Since condition-set parents
cannot close a cycle, the best condition-set completion is found per
(child, same-set parent) pair and the forest is then chosen by a maximum
directed spanning forest over those scores.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import CategoricalDataset, hstack
from .mdsf import (
    ROOT,
    RootedDigraph,
    enumerate_forests,
    max_directed_spanning_forest,
    max_directed_spanning_tree,
)
from .scoring import (
    LocalScorer,
    ScoreConfig,
    count_stats,
    local_score_bdeu,
    structure_log_prior,
)

STRUCTURES = ("forest", "tree", "none")


@dataclass(frozen=True)
class ParentSet:
    """Parents of one child as dataset column ids.

    ``intra`` is the optional parent from the target set, ``inter`` the
    (sorted) parents drawn from the condition set.
    """

    intra: int | None = None
    inter: tuple = ()

    def __post_init__(self):
        if self.intra is not None:
            object.__setattr__(self, "intra", int(self.intra))
        object.__setattr__(self, "inter", tuple(sorted(int(p) for p in self.inter)))

    @property
    def columns(self) -> tuple:
        cols = self.inter if self.intra is None else self.inter + (self.intra,)
        return tuple(sorted(cols))


@dataclass(frozen=True)
class CandidateTable:
    """Best condition-set completion per (child, same-set parent option).

    ``score[i, j]`` for ``j < n`` is the best family score of target ``i``
    with target ``j`` as its same-set parent; column ``n`` is the no-parent
    option. ``inter[i][j]`` holds the matching condition-set parents.
    """

    targets: tuple
    condition: tuple
    score: np.ndarray
    inter: tuple

    def parent_set(self, i: int, j: int | None) -> ParentSet:
        n = len(self.targets)
        col = n if j is None else j
        intra = None if j is None else self.targets[j]
        return ParentSet(intra, self.inter[i][col])


@dataclass(frozen=True)
class ScfStructure:
    """A parent set per target with the family scores that produced it."""

    targets: tuple
    condition: tuple
    parents: tuple
    family_scores: tuple
    score: float

    def intra_parent(self) -> tuple:
        """Same-set parent of each target as a target position (``-1`` for roots)."""
        pos = {t: i for i, t in enumerate(self.targets)}
        return tuple(ROOT if p.intra is None else pos[p.intra] for p in self.parents)

    def parent_map(self) -> dict:
        return {t: p for t, p in zip(self.targets, self.parents)}

    @property
    def n_intra_edges(self) -> int:
        return sum(p.intra is not None for p in self.parents)


def _check_sets(dataset: CategoricalDataset, targets, condition):
    targets, condition = tuple(int(t) for t in targets), tuple(int(c) for c in condition)
    if len(set(targets)) != len(targets) or len(set(condition)) != len(condition):
        raise ValueError("duplicate ids in target or condition set")
    if set(targets) & set(condition):
        raise ValueError("target and condition sets must be disjoint")
    for v in targets + condition:
        if not 0 <= v < dataset.n_vars:
            raise ValueError(f"variable id {v} out of range")
    return targets, condition


def inter_subsets(condition, k: int):
    """Condition-set subsets of size <= k: by size, then lexicographically."""
    if k < 0:
        raise ValueError("k must be >= 0")
    cond = sorted(condition)
    return [s for size in range(min(k, len(cond)) + 1)
            for s in itertools.combinations(cond, size)]


def build_candidate_table(dataset, targets, condition, config: ScoreConfig,
                          scorer: LocalScorer | None = None) -> CandidateTable:
    """Score every (child, same-set parent, condition subset) and keep the best.

    Ties resolve to the fewest parents, then the lexicographically smallest
    id set, because subsets are visited in that order and only a strictly
    better score replaces the incumbent.
    """
    targets, condition = _check_sets(dataset, targets, condition)
    if config.k < 0:
        raise ValueError("k must be >= 0")
    scorer = LocalScorer(dataset, config.ess) if scorer is None else scorer
    subsets = inter_subsets(condition, config.k)
    n = len(targets)
    score = np.full((n, n + 1), -np.inf)
    inter = [[() for _ in range(n + 1)] for _ in range(n)]
    for i, child in enumerate(targets):
        for j in range(n + 1):
            if j == i:
                continue
            intra = targets[j] if j < n else None
            best, arg = -math.inf, ()
            for sub in subsets:
                s = scorer.family_score(child, ParentSet(intra, sub), condition, config)
                if s > best:
                    best, arg = s, sub
            score[i, j] = best
            inter[i][j] = arg
    score.setflags(write=False)
    return CandidateTable(targets, condition, score, tuple(tuple(r) for r in inter))


def candidate_digraph(table: CandidateTable, structure: str = "forest") -> RootedDigraph:
    """Edge ``j -> i`` weighs ``score[i, j]``; root ``i`` weighs ``score[i, n]``."""
    n = len(table.targets)
    edge = table.score[:, :n].T.copy()
    if structure == "none":
        edge[:] = -np.inf
    return RootedDigraph(edge, table.score[:, n])


def learn_cmap_scf(dataset, targets, condition, config: ScoreConfig, structure: str = "forest",
                   scorer: LocalScorer | None = None) -> ScfStructure:
    """Conditional MAP structure of ``targets`` given ``condition``.

    Parameters
    ----------
    structure : {"forest", "tree", "none"}
        Shape allowed among targets: any forest, a single spanning tree, or
        no same-set edges at all.
    """
    if structure not in STRUCTURES:
        raise ValueError(f"structure must be one of {STRUCTURES}")
    table = build_candidate_table(dataset, targets, condition, config, scorer)
    n = len(table.targets)
    if n == 0:
        return ScfStructure((), table.condition, (), (), 0.0)
    g = candidate_digraph(table, structure)
    forest = max_directed_spanning_tree(g) if structure == "tree" \
        else max_directed_spanning_forest(g)
    parents, fam = [], []
    for i, p in enumerate(forest.parent):
        parents.append(table.parent_set(i, None if p == ROOT else p))
        fam.append(float(table.score[i, n if p == ROOT else p]))
    return ScfStructure(table.targets, table.condition, tuple(parents), tuple(fam), forest.score)


def transition_dataset(prev: CategoricalDataset, nxt: CategoricalDataset) -> CategoricalDataset:
    """Join paired slices; previous-slice columns are renamed ``<name>@t-1``."""
    if prev.names != nxt.names or prev.cardinalities != nxt.cardinalities:
        raise ValueError("slice schemas differ")
    renamed = CategoricalDataset(
        [f"{n}@t-1" for n in prev.names], prev.cardinalities, prev.data, prev.categories,
    )
    return hstack(renamed, nxt)


def learn_map_scf_pair(prev: CategoricalDataset, nxt: CategoricalDataset, config: ScoreConfig,
                       structure: str = "forest"):
    """MAP forest of the previous slice and CMAP structure of the next slice.

    The two problems are independent: previous-slice variables never take
    parents from the next slice. Column ids in the second structure refer
    to :func:`transition_dataset`.
    """
    m = prev.n_vars
    joint = transition_dataset(prev, nxt)
    g_prev = learn_cmap_scf(prev, range(m), (), config, structure)
    g_next = learn_cmap_scf(joint, range(m, 2 * m), range(m), config, structure)
    return g_prev, g_next


def enumerate_scf_structures(targets, condition, k: int, structure: str = "forest"):
    """Yield every valid SCF as a tuple of :class:`ParentSet` (one per target)."""
    targets = tuple(targets)
    subsets = inter_subsets(condition, k)
    n = len(targets)
    if structure == "none":
        forests = [(ROOT,) * n]
    else:
        forests = enumerate_forests(n, single_root=(structure == "tree"))
    for parent in forests:
        intra = [None if p == ROOT else targets[p] for p in parent]
        for combo in itertools.product(subsets, repeat=n):
            yield tuple(ParentSet(a, s) for a, s in zip(intra, combo))


def score_parent_sets(dataset, targets, condition, parents, config: ScoreConfig) -> float:
    """Total score of a structure, recomputed from raw counts without caching."""
    total = 0.0
    for child, ps in zip(targets, parents):
        prior = structure_log_prior(ps, condition, config)
        if prior == -math.inf:
            return -math.inf
        total += local_score_bdeu(count_stats(dataset, child, ps.columns), config.ess) + prior
    return total
